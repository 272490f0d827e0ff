//! ARD squared-exponential kernel and the log marginal likelihood.
//!
//! Hyperparameters are handled in log space as
//! `theta = (ln l_1, .., ln l_d, ln sf2, ln sn2)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Jitter schedule: none, then `1e-10` growing tenfold up to `1e-4`.
pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-4;

/// Training inputs plus the per-dimension squared differences the kernel and
/// its gradient reuse.
#[derive(Debug, Clone)]
pub struct Design {
    xn: DMatrix<f64>,
    sqdiff: Vec<DMatrix<f64>>,
}

impl Design {
    /// `xn` is `M x d`, already normalized.
    pub fn new(xn: DMatrix<f64>) -> Self {
        let m = xn.nrows();
        let sqdiff = (0..xn.ncols())
            .map(|d| DMatrix::from_fn(m, m, |i, j| (xn[(i, d)] - xn[(j, d)]).powi(2)))
            .collect();
        Self { xn, sqdiff }
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.xn
    }

    pub fn n_points(&self) -> usize {
        self.xn.nrows()
    }

    pub fn dim(&self) -> usize {
        self.xn.ncols()
    }

    /// Noise-free kernel matrix.
    pub fn signal_kernel(&self, theta: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let inv_l2: Vec<f64> = theta[..d].iter().map(|l| (-2.0 * l).exp()).collect();
        let sf2 = theta[d].exp();
        let m = self.n_points();
        DMatrix::from_fn(m, m, |i, j| {
            let r2: f64 = (0..d).map(|k| self.sqdiff[k][(i, j)] * inv_l2[k]).sum();
            sf2 * (-0.5 * r2).exp()
        })
    }
}

/// Kernel between one normalized query and each training row.
pub fn cross_kernel(xn: &DMatrix<f64>, q: &[f64], theta: &[f64]) -> DVector<f64> {
    let d = xn.ncols();
    let sf2 = theta[d].exp();
    DVector::from_fn(xn.nrows(), |i, _| {
        let r2: f64 = (0..d)
            .map(|k| (xn[(i, k)] - q[k]).powi(2) * (-2.0 * theta[k]).exp())
            .sum();
        sf2 * (-0.5 * r2).exp()
    })
}

/// Cholesky of `kf + (sn2 + jitter) I`, escalating the jitter on failure.
pub fn factor(kf: &DMatrix<f64>, sn2: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = 0.0;
    loop {
        let mut k = kf.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += sn2 + jitter;
        }
        if let Some(c) = Cholesky::new(k) {
            return Ok((c, jitter));
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX * 1.000001 {
            return Err(Error::FactorizationFailure { jitter: JITTER_MAX });
        }
    }
}

/// Log marginal likelihood and its gradient with respect to `theta`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub lml: f64,
    pub grad: Vec<f64>,
    pub jitter: f64,
}

pub fn log_marginal_likelihood(design: &Design, y: &[f64], theta: &[f64]) -> Result<Evaluation> {
    let d = design.dim();
    let m = design.n_points();
    if theta.len() != d + 2 || y.len() != m {
        return Err(Error::DimensionMismatch {
            expected: d + 2,
            actual: theta.len(),
        });
    }
    let kf = design.signal_kernel(theta);
    let sn2 = theta[d + 1].exp();
    let (chol, jitter) = factor(&kf, sn2)?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let lml = -0.5 * yv.dot(&alpha) - log_det_half - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();

    // A = alpha alpha^T - K^-1; dL/dtheta_j = tr(A dK_j) / 2.
    let mut a = chol.inverse();
    a.neg_mut();
    a.ger(1.0, &alpha, &alpha, 1.0);

    let mut grad = vec![0.0; d + 2];
    let ak = a.component_mul(&kf);
    for (k, g) in grad.iter_mut().enumerate().take(d) {
        let inv_l2 = (-2.0 * theta[k]).exp();
        *g = 0.5 * ak.dot(&design.sqdiff[k]) * inv_l2;
    }
    grad[d] = 0.5 * ak.sum();
    grad[d + 1] = 0.5 * sn2 * a.trace();
    Ok(Evaluation { lml, grad, jitter })
}
