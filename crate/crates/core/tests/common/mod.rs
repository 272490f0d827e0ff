//! Reference implementations used as test oracles. They share no code with
//! the library's decompositions.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Singular values by one-sided Jacobi rotations, descending.
pub fn jacobi_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let m = a.nrows();
    let n = a.ncols();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[(i, j)]).collect()).collect();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = cols[p].iter().zip(&cols[q]).fold((0.0, 0.0, 0.0), |acc, (x, y)| {
                    (acc.0 + x * x, acc.1 + y * y, acc.2 + x * y)
                });
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Squared Frobenius norm.
pub fn frob2(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// Gaussian-ish random matrix (sum of uniforms), seeded.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>() - 0.5)
}

/// Random matrix with a decaying spectrum: `sum_i decay^i u_i v_i^T` with
/// random (non-orthogonal) factors.
pub fn decaying_matrix(rows: usize, cols: usize, decay: f64, seed: u64) -> DMatrix<f64> {
    let u = random_matrix(rows, cols, seed);
    let v = random_matrix(cols, cols, seed ^ 0x9e37_79b9);
    let d = DMatrix::from_fn(cols, cols, |i, j| if i == j { decay.powi(i as i32) } else { 0.0 });
    u * d * v
}

/// Row counts of `k` nearly equal blocks.
pub fn even_counts(rows: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| rows / k + usize::from(i < rows % k)).collect()
}

/// Median of a sample.
pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
