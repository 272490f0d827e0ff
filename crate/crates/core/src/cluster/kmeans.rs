//! Lloyd's k-means with k-means++ seeding.
//!
//! Points are visited in a canonical (lexicographic) order internally, so the
//! clustering does not depend on the order the caller lists them in. Labels
//! are renumbered by first appearance in the caller's order.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::stream;

pub const MAX_LLOYD_ITER: usize = 300;
pub const DEFAULT_N_INIT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// `k x d`, row `c` is the centroid of cluster `c`.
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    /// Inertia after every centroid update of the winning run.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn dist2(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    points
        .row(i)
        .iter()
        .zip(centroids.row(c).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Nearest centroid per point; ties go to the lower centroid index.
fn assign(points: &DMatrix<f64>, centroids: &DMatrix<f64>) -> Vec<(usize, f64)> {
    (0..points.nrows())
        .into_par_iter()
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for c in 0..centroids.nrows() {
                let d = dist2(points, i, centroids, c);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .collect()
}

fn update(points: &DMatrix<f64>, labels: &[usize], k: usize) -> (DMatrix<f64>, Vec<usize>) {
    let mut sums = DMatrix::zeros(k, points.ncols());
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        let mut row = sums.row_mut(l);
        row += points.row(i);
        counts[l] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            let mut row = sums.row_mut(c);
            row /= n as f64;
        }
    }
    (sums, counts)
}

fn inertia(points: &DMatrix<f64>, labels: &[usize], centroids: &DMatrix<f64>) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| dist2(points, i, centroids, l))
        .sum()
}

/// Gives each empty cluster the point farthest from its centroid within the
/// currently largest cluster. Never increases the inertia.
fn repair_empty(points: &DMatrix<f64>, labels: &mut [usize], centroids: &mut DMatrix<f64>, counts: &mut [usize]) {
    while let Some(empty) = counts.iter().position(|&n| n == 0) {
        let largest = (0..counts.len())
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .unwrap();
        let mut far = (usize::MAX, -1.0);
        for (i, &l) in labels.iter().enumerate() {
            if l == largest {
                let d = dist2(points, i, centroids, largest);
                if d > far.1 {
                    far = (i, d);
                }
            }
        }
        labels[far.0] = empty;
        counts[largest] -= 1;
        counts[empty] += 1;
        centroids.row_mut(empty).copy_from(&points.row(far.0));
    }
}

fn plus_plus_init<R: Rng>(points: &DMatrix<f64>, k: usize, rng: &mut R) -> DMatrix<f64> {
    let n = points.nrows();
    let mut centroids = DMatrix::zeros(k, points.ncols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from(&points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(points, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from(&points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(points, i, &centroids, c));
        }
    }
    centroids
}

fn lloyd(points: &DMatrix<f64>, k: usize, seed: u64, run: u64) -> KMeansResult {
    let mut rng = stream(seed, run);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut labels: Vec<usize> = assign(points, &centroids).into_iter().map(|(c, _)| c).collect();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_LLOYD_ITER {
        iterations += 1;
        let (mut next, mut counts) = update(points, &labels, k);
        repair_empty(points, &mut labels, &mut next, &mut counts);
        let (fixed, _) = update(points, &labels, k);
        centroids = fixed;
        history.push(inertia(points, &labels, &centroids));
        let relabeled: Vec<usize> = assign(points, &centroids).into_iter().map(|(c, _)| c).collect();
        if relabeled == labels {
            converged = true;
            break;
        }
        labels = relabeled;
    }
    if !converged {
        let (fixed, mut counts) = update(points, &labels, k);
        centroids = fixed;
        repair_empty(points, &mut labels, &mut centroids, &mut counts);
        centroids = update(points, &labels, k).0;
    }
    KMeansResult {
        inertia: inertia(points, &labels, &centroids),
        labels,
        centroids,
        history,
        iterations,
        converged,
    }
}

fn lex_cmp(points: &DMatrix<f64>, a: usize, b: usize) -> Ordering {
    for (x, y) in points.row(a).iter().zip(points.row(b).iter()) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Best of `n_init` seeded runs (lowest inertia, earliest run on ties).
///
/// `points` is `N x d`, one point per row.
pub fn kmeans(points: &DMatrix<f64>, k: usize, n_init: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.nrows();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::KExceedsN { k, n });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp(points, a, b).then(a.cmp(&b)));
    let canon = points.select_rows(&order);

    let runs: Vec<KMeansResult> = (0..n_init.max(1) as u64)
        .into_par_iter()
        .map(|r| lloyd(&canon, k, seed, r))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .unwrap();

    // Back to caller order, then renumber clusters by first appearance.
    let mut labels = vec![0; n];
    for (pos, &orig) in order.iter().enumerate() {
        labels[orig] = best.labels[pos];
    }
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for l in labels.iter_mut() {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
        *l = map[*l];
    }
    let mut centroids = DMatrix::zeros(k, points.ncols());
    for (old, &new) in map.iter().enumerate() {
        centroids.row_mut(new).copy_from(&best.centroids.row(old));
    }
    Ok(KMeansResult {
        labels,
        centroids,
        ..best
    })
}

/// Adjusted Rand index between two labelings of the same points.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
    }
    let c2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().map(|&v| c2(v)).sum();
    let rows: f64 = (0..ka).map(|i| c2(table[i * kb..(i + 1) * kb].iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2((0..ka).map(|i| table[i * kb + j]).sum())).sum();
    let total = c2(n as u64);
    let expected = if total > 0.0 { rows * cols / total } else { 0.0 };
    let max = 0.5 * (rows + cols);
    if max == expected {
        // Both partitions trivial in the same way.
        return if rows == cols { 1.0 } else { 0.0 };
    }
    (sum_ij - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(per: usize, dim: usize, sep: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = stream(seed, 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let n = 3 * per;
        let mut labels = Vec::with_capacity(n);
        let m = DMatrix::from_fn(n, dim, |i, j| {
            let c = i / per;
            let center = if j == c { sep } else { 0.0 };
            center + noise.sample(&mut rng)
        });
        for i in 0..n {
            labels.push(i / per);
        }
        (m, labels)
    }

    #[test]
    fn single_cluster_centroid_is_mean() {
        let (pts, _) = blobs(10, 3, 5.0, 1);
        let r = kmeans(&pts, 1, 3, 0).unwrap();
        assert!(r.labels.iter().all(|&l| l == 0));
        let mean = pts.row_mean();
        assert!((r.centroids.row(0) - mean).amax() < 1e-12);
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let (pts, truth) = blobs(40, 5, 20.0, 2);
        for seed in 0..5 {
            let r = kmeans(&pts, 3, DEFAULT_N_INIT, seed).unwrap();
            assert_eq!(adjusted_rand_index(&r.labels, &truth), 1.0);
            assert!(r.converged);
            assert!(r.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            let again = assign(&pts, &r.centroids);
            assert!(again.iter().zip(&r.labels).all(|(a, &l)| a.0 == l));
        }
    }

    #[test]
    fn identical_points_fill_every_cluster() {
        let pts = DMatrix::from_element(6, 2, 1.5);
        let r = kmeans(&pts, 4, 2, 0).unwrap();
        let mut seen = r.labels.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 4);
        assert_eq!(r.inertia, 0.0);
        assert!(matches!(kmeans(&pts, 7, 1, 0), Err(Error::KExceedsN { k: 7, n: 6 })));
    }

    #[test]
    fn ari_basics() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[0, 0, 0]), 1.0);
        let v = adjusted_rand_index(&[0, 0, 1, 1, 2, 2], &[0, 1, 0, 1, 0, 1]);
        assert!(v < 0.1);
        // Classic example: sklearn gives 0.24242424...
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 2, 2];
        assert!((adjusted_rand_index(&a, &b) - 0.242_424_242_424_242_4).abs() < 1e-12);
    }

    #[test]
    fn input_order_does_not_matter() {
        let (pts, _) = blobs(15, 4, 3.0, 5);
        let perm: Vec<usize> = (0..45).map(|i| (i * 17) % 45).collect();
        let shuffled = pts.select_rows(&perm);
        let a = kmeans(&pts, 3, 4, 9).unwrap();
        let b = kmeans(&shuffled, 3, 4, 9).unwrap();
        let back: Vec<usize> = {
            let mut v = vec![0; 45];
            for (pos, &orig) in perm.iter().enumerate() {
                v[orig] = b.labels[pos];
            }
            v
        };
        assert_eq!(adjusted_rand_index(&a.labels, &back), 1.0);
        assert_eq!(a.inertia, b.inertia);
    }
}
