//! Gaussian-process regression for one projection weight.
//!
//! Inputs are min-max scaled to the unit cube and targets standardized before
//! fitting. The kernel is an ARD squared exponential plus white noise, and the
//! hyperparameters maximize the log marginal likelihood over several seeded
//! restarts. Predictions report a standard deviation that includes the noise.

pub mod lbfgs;
pub mod likelihood;

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::manifest::{join_floats, Manifest};
pub use likelihood::{log_marginal_likelihood, Design, Evaluation};

/// Bounds on the log hyperparameters, in normalized units.
pub const LOG_LENGTH_BOUNDS: (f64, f64) = (-6.907755278982137, 6.907755278982137); // 1e-3 .. 1e3
pub const LOG_SIGNAL_BOUNDS: (f64, f64) = (-9.210340371976182, 9.210340371976182); // 1e-4 .. 1e4
pub const LOG_NOISE_BOUNDS: (f64, f64) = (-18.420680743952367, 2.302585092994046); // 1e-8 .. 10

/// Relative spread below which targets are treated as constant.
const DEGENERATE_REL_STD: f64 = 1e-12;
/// Uncertainty reported by a constant model, relative to `max(1, |c|)`.
const CONSTANT_STD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GpConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iter: 200,
            grad_tol: 1e-6,
            seed: 0,
        }
    }
}

/// Hyperparameters: per-input length-scales, signal and noise variances.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    pub lengths: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl Hyper {
    pub fn to_theta(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.lengths.iter().map(|l| l.ln()).collect();
        t.push(self.signal_var.ln());
        t.push(self.noise_var.ln());
        t
    }

    pub fn from_theta(theta: &[f64]) -> Self {
        let d = theta.len() - 2;
        Self {
            lengths: theta[..d].iter().map(|t| t.exp()).collect(),
            signal_var: theta[d].exp(),
            noise_var: theta[d + 1].exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if self.lengths.iter().all(|&l| ok(l)) && ok(self.signal_var) && ok(self.noise_var) {
            Ok(())
        } else {
            Err(Error::InvalidParameter("hyperparameters must be positive".into()))
        }
    }
}

fn theta_bounds(d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![LOG_LENGTH_BOUNDS.0; d];
    let mut hi = vec![LOG_LENGTH_BOUNDS.1; d];
    lo.extend([LOG_SIGNAL_BOUNDS.0, LOG_NOISE_BOUNDS.0]);
    hi.extend([LOG_SIGNAL_BOUNDS.1, LOG_NOISE_BOUNDS.1]);
    (lo, hi)
}

/// Affine maps between raw and model units.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub x_min: Vec<f64>,
    /// Per-input range; 1 where the training inputs do not vary.
    pub x_range: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Normalization {
    pub fn from_data(x: &DMatrix<f64>, y: &[f64]) -> Self {
        let (x_min, x_range) = x
            .column_iter()
            .map(|c| {
                let lo = c.min();
                let r = c.max() - lo;
                (lo, if r > 0.0 { r } else { 1.0 })
            })
            .unzip();
        let m = y.len() as f64;
        let y_mean = y.iter().sum::<f64>() / m;
        let y_std = (y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / m).sqrt();
        Self {
            x_min,
            x_range,
            y_mean,
            y_std,
        }
    }

    pub fn scale_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.x_min)
            .zip(&self.x_range)
            .map(|((v, lo), r)| (v - lo) / r)
            .collect()
    }

    pub fn scale_inputs(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            (x[(i, j)] - self.x_min[j]) / self.x_range[j]
        })
    }

    fn is_degenerate(&self) -> bool {
        self.y_std <= DEGENERATE_REL_STD * self.y_mean.abs().max(1.0)
    }
}

#[derive(Debug, Clone)]
struct Posterior {
    xn: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

/// A fitted Gaussian process, or a constant model when the targets do not
/// vary. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpModel {
    x: DMatrix<f64>,
    y: Vec<f64>,
    norm: Normalization,
    hyper: Hyper,
    jitter: f64,
    lml: f64,
    trace: Vec<f64>,
    posterior: Option<Posterior>,
}

/// Leave-one-out predictions plus the least-squares line through
/// (actual, predicted).
#[derive(Debug, Clone, PartialEq)]
pub struct LooReport {
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
    pub std: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl LooReport {
    fn from_pairs(actual: Vec<f64>, predicted: Vec<f64>, std: Vec<f64>) -> Self {
        let m = actual.len() as f64;
        let ma = actual.iter().sum::<f64>() / m;
        let mp = predicted.iter().sum::<f64>() / m;
        let saa: f64 = actual.iter().map(|a| (a - ma).powi(2)).sum();
        let sap: f64 = actual.iter().zip(&predicted).map(|(a, p)| (a - ma) * (p - mp)).sum();
        let (slope, intercept) = if saa > 0.0 {
            (sap / saa, mp - sap / saa * ma)
        } else {
            (0.0, mp)
        };
        let ss_res: f64 = actual.iter().zip(&predicted).map(|(a, p)| (a - p).powi(2)).sum();
        let r2 = if saa > 0.0 { 1.0 - ss_res / saa } else if ss_res == 0.0 { 1.0 } else { f64::NEG_INFINITY };
        Self {
            actual,
            predicted,
            std,
            slope,
            intercept,
            r2,
        }
    }
}

fn check_training(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    if x.nrows() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: x.nrows(),
        });
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidDimension("inputs have no columns".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}

impl GpModel {
    /// Fits hyperparameters by maximizing the marginal likelihood.
    ///
    /// `x` is `M x d` in raw units. Restart start points come from a
    /// generator seeded with `cfg.seed`; the best restart wins, ties going to
    /// the earliest.
    pub fn fit(x: &DMatrix<f64>, y: &[f64], cfg: &GpConfig) -> Result<Self> {
        check_training(x, y)?;
        let norm = Normalization::from_data(x, y);
        let d = x.ncols();
        if norm.is_degenerate() {
            return Ok(Self::constant(x, y, norm));
        }
        let design = Design::new(norm.scale_inputs(x));
        let ys: Vec<f64> = y.iter().map(|v| (v - norm.y_mean) / norm.y_std).collect();
        let (lo, hi) = theta_bounds(d);

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let starts: Vec<Vec<f64>> = (0..cfg.restarts.max(1))
            .map(|_| {
                let mut t: Vec<f64> = (0..d)
                    .map(|_| rng.random_range(1e-2f64.ln()..1e1f64.ln()))
                    .collect();
                t.push(0.0);
                t.push(1e-2f64.ln());
                t
            })
            .collect();

        let runs: Vec<Option<lbfgs::Minimum>> = starts
            .par_iter()
            .map(|t0| {
                lbfgs::minimize(
                    |t| {
                        log_marginal_likelihood(&design, &ys, t)
                            .ok()
                            .map(|e| (-e.lml, e.grad.iter().map(|g| -g).collect()))
                    },
                    t0,
                    &lo,
                    &hi,
                    cfg.max_iter,
                    cfg.grad_tol,
                )
            })
            .collect();
        let best = runs
            .into_iter()
            .flatten()
            .reduce(|a, b| if b.f < a.f { b } else { a })
            .ok_or(Error::FactorizationFailure {
                jitter: likelihood::JITTER_MAX,
            })?;
        let trace = best.trace.iter().map(|f| -f).collect();
        let mut model = Self::with_hyper(x, y, Hyper::from_theta(&best.x))?;
        model.trace = trace;
        Ok(model)
    }

    /// Builds the posterior for fixed hyperparameters, with normalization
    /// taken from the data.
    pub fn with_hyper(x: &DMatrix<f64>, y: &[f64], hyper: Hyper) -> Result<Self> {
        check_training(x, y)?;
        let norm = Normalization::from_data(x, y);
        Self::with_hyper_and_norm(x, y, hyper, norm, None)
    }

    fn with_hyper_and_norm(
        x: &DMatrix<f64>,
        y: &[f64],
        hyper: Hyper,
        norm: Normalization,
        forced_jitter: Option<f64>,
    ) -> Result<Self> {
        hyper.validate()?;
        if hyper.lengths.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                actual: hyper.lengths.len(),
            });
        }
        if norm.is_degenerate() {
            return Ok(Self::constant(x, y, norm));
        }
        let theta = hyper.to_theta();
        let xn = norm.scale_inputs(x);
        let design = Design::new(xn.clone());
        let kf = design.signal_kernel(&theta);
        let (chol, jitter) = match forced_jitter {
            Some(j) => {
                let mut k = kf;
                for i in 0..k.nrows() {
                    k[(i, i)] += hyper.noise_var + j;
                }
                (Cholesky::new(k).ok_or(Error::FactorizationFailure { jitter: j })?, j)
            }
            None => likelihood::factor(&kf, hyper.noise_var)?,
        };
        let ys = DVector::from_iterator(y.len(), y.iter().map(|v| (v - norm.y_mean) / norm.y_std));
        let alpha = chol.solve(&ys);
        let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
        let lml = -0.5 * ys.dot(&alpha)
            - log_det_half
            - 0.5 * y.len() as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(Self {
            x: x.clone(),
            y: y.to_vec(),
            norm,
            hyper,
            jitter,
            lml,
            trace: vec![lml],
            posterior: Some(Posterior { xn, chol, alpha }),
        })
    }

    fn constant(x: &DMatrix<f64>, y: &[f64], norm: Normalization) -> Self {
        let d = x.ncols();
        Self {
            x: x.clone(),
            y: y.to_vec(),
            hyper: Hyper {
                lengths: vec![1.0; d],
                signal_var: LOG_SIGNAL_BOUNDS.0.exp(),
                noise_var: LOG_NOISE_BOUNDS.0.exp(),
            },
            norm,
            jitter: 0.0,
            lml: 0.0,
            trace: Vec::new(),
            posterior: None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.posterior.is_none()
    }

    pub fn hyper(&self) -> &Hyper {
        &self.hyper
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn n_train(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn train_inputs(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn train_targets(&self) -> &[f64] {
        &self.y
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Likelihood at the start and after each accepted optimizer step of the
    /// winning restart.
    pub fn optimizer_trace(&self) -> &[f64] {
        &self.trace
    }

    /// Posterior mean and standard deviation (noise included) at a raw input.
    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let Some(p) = &self.posterior else {
            return (
                self.norm.y_mean,
                CONSTANT_STD * self.norm.y_mean.abs().max(1.0),
            );
        };
        let qn = self.norm.scale_input(q);
        let theta = self.hyper.to_theta();
        let ks = likelihood::cross_kernel(&p.xn, &qn, &theta);
        let mean = ks.dot(&p.alpha);
        let v = p
            .chol
            .l_dirty()
            .solve_lower_triangular(&ks)
            .expect("Cholesky factor has a positive diagonal");
        let var = (self.hyper.signal_var + self.hyper.noise_var - v.norm_squared()).max(0.0);
        (
            self.norm.y_mean + self.norm.y_std * mean,
            self.norm.y_std * var.sqrt(),
        )
    }

    /// Closed-form leave-one-out predictions at the fitted hyperparameters.
    pub fn loo(&self) -> LooReport {
        let m = self.y.len();
        let Some(p) = &self.posterior else {
            return LooReport::from_pairs(
                self.y.clone(),
                vec![self.norm.y_mean; m],
                vec![CONSTANT_STD * self.norm.y_mean.abs().max(1.0); m],
            );
        };
        let kinv = p.chol.inverse();
        let mut predicted = Vec::with_capacity(m);
        let mut std = Vec::with_capacity(m);
        for i in 0..m {
            let ys = (self.y[i] - self.norm.y_mean) / self.norm.y_std;
            let mu = ys - p.alpha[i] / kinv[(i, i)];
            predicted.push(self.norm.y_mean + self.norm.y_std * mu);
            std.push(self.norm.y_std * (1.0 / kinv[(i, i)]).sqrt());
        }
        LooReport::from_pairs(self.y.clone(), predicted, std)
    }

    /// The same model conditioned on a subset of its training points:
    /// hyperparameters, normalization and jitter are kept.
    pub fn condition_on(&self, keep: &[usize]) -> Result<Self> {
        if let Some(&bad) = keep.iter().find(|&&i| i >= self.y.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: self.y.len(),
            });
        }
        let x = self.x.select_rows(keep);
        let y: Vec<f64> = keep.iter().map(|&i| self.y[i]).collect();
        if self.is_constant() {
            let mut m = Self::constant(&x, &y, self.norm.clone());
            m.hyper = self.hyper.clone();
            return Ok(m);
        }
        Self::with_hyper_and_norm(&x, &y, self.hyper.clone(), self.norm.clone(), Some(self.jitter))
    }

    /// Short hex digest of the training data.
    pub fn training_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.x.nrows() as u64).to_le_bytes());
        h.update((self.x.ncols() as u64).to_le_bytes());
        for v in self.x.iter().chain(&self.y) {
            h.update(v.to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.push("kind", if self.is_constant() { "constant" } else { "gp" });
        m.push("dim", self.dim());
        m.push("n_train", self.n_train());
        m.push("hyper.lengths", join_floats(&self.hyper.lengths));
        m.push("hyper.signal_var", format!("{:?}", self.hyper.signal_var));
        m.push("hyper.noise_var", format!("{:?}", self.hyper.noise_var));
        m.push("jitter", format!("{:?}", self.jitter));
        m.push("lml", format!("{:?}", self.lml));
        m.push("norm.x_min", join_floats(&self.norm.x_min));
        m.push("norm.x_range", join_floats(&self.norm.x_range));
        m.push("norm.y_mean", format!("{:?}", self.norm.y_mean));
        m.push("norm.y_std", format!("{:?}", self.norm.y_std));
        m.push("train.hash", self.training_hash());
        for i in 0..self.n_train() {
            let mut row: Vec<f64> = self.x.row(i).iter().copied().collect();
            row.push(self.y[i]);
            m.push(format!("train.{i:06}"), join_floats(&row));
        }
        m
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let d: usize = m.parse("dim")?;
        let n: usize = m.parse("n_train")?;
        let mut x = DMatrix::zeros(n, d);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let row: Vec<f64> = m.parse_list(&format!("train.{i:06}"))?;
            if row.len() != d + 1 {
                return Err(Error::format("gp model", format!("row {i} has {} values", row.len())));
            }
            x.row_mut(i).copy_from_slice(&row[..d]);
            y.push(row[d]);
        }
        let hyper = Hyper {
            lengths: m.parse_list("hyper.lengths")?,
            signal_var: m.parse("hyper.signal_var")?,
            noise_var: m.parse("hyper.noise_var")?,
        };
        let norm = Normalization {
            x_min: m.parse_list("norm.x_min")?,
            x_range: m.parse_list("norm.x_range")?,
            y_mean: m.parse("norm.y_mean")?,
            y_std: m.parse("norm.y_std")?,
        };
        let model = match m.require("kind")? {
            "constant" => {
                let mut c = Self::constant(&x, &y, norm);
                c.hyper = hyper;
                c
            }
            "gp" => Self::with_hyper_and_norm(&x, &y, hyper, norm, Some(m.parse("jitter")?))?,
            other => return Err(Error::format("gp model", format!("unknown kind `{other}`"))),
        };
        if model.training_hash() != m.require("train.hash")? {
            return Err(Error::format("gp model", "training data hash mismatch"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_manifest().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_manifest(&Manifest::read(path)?)
    }
}

/// Fits a model and returns its leave-one-out report.
pub fn loo_validate(x: &DMatrix<f64>, y: &[f64], cfg: &GpConfig) -> Result<LooReport> {
    if y.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: y.len(),
        });
    }
    Ok(GpModel::fit(x, y, cfg)?.loo())
}

/// One model per column of `targets` (`M x n`), fitted in parallel. Model `i`
/// uses seed `cfg.seed + i`.
pub fn fit_many(x: &DMatrix<f64>, targets: &DMatrix<f64>, cfg: &GpConfig) -> Result<Vec<GpModel>> {
    (0..targets.ncols())
        .into_par_iter()
        .map(|i| {
            let cfg = GpConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            let y: Vec<f64> = targets.column(i).iter().copied().collect();
            GpModel::fit(x, &y, &cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scattered(m: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, d, |_, _| rng.random::<f64>())
    }

    fn quick() -> GpConfig {
        GpConfig {
            restarts: 3,
            max_iter: 100,
            ..GpConfig::default()
        }
    }

    #[test]
    fn constant_targets_give_constant_model() {
        let x = scattered(6, 4, 1);
        let m = GpModel::fit(&x, &[2.5; 6], &quick()).unwrap();
        assert!(m.is_constant());
        let (mu, sd) = m.predict(&[0.3, 0.1, 0.9, 0.5]);
        assert_eq!(mu, 2.5);
        assert!(sd > 0.0 && sd < 1e-6);
        let loo = m.loo();
        assert!(loo.predicted.iter().all(|&p| p == 2.5));
    }

    #[test]
    fn interpolates_training_points() {
        let x = scattered(25, 2, 3);
        let y: Vec<f64> = x.row_iter().map(|r| (3.0 * r[0]).sin() + r[1] * r[1]).collect();
        let m = GpModel::fit(&x, &y, &quick()).unwrap();
        let noise_sd = m.hyper().noise_var.sqrt() * m.normalization().y_std;
        for i in 0..25 {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let (mu, _) = m.predict(&row);
            assert!((mu - y[i]).abs() <= 3.0 * noise_sd + 1e-6, "{mu} vs {}", y[i]);
        }
        assert!(m.optimizer_trace().windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let x = scattered(10, 2, 4);
        let y: Vec<f64> = x.row_iter().map(|r| r[0] - r[1]).collect();
        let m = GpModel::fit(&x, &y, &quick()).unwrap();
        let far = [1e6, -1e6];
        let (mu, sd) = m.predict(&far);
        let h = m.hyper();
        assert!((mu - m.normalization().y_mean).abs() < 1e-9);
        let prior = m.normalization().y_std * (h.signal_var + h.noise_var).sqrt();
        assert!((sd - prior).abs() < 1e-9 * prior);
    }

    #[test]
    fn three_point_posterior_by_hand() {
        // Raw x already spans [0, 1], targets standardized by hand below.
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 0.5, 1.0]);
        let y = [1.0, 2.0, 0.0];
        let h = Hyper {
            lengths: vec![0.5],
            signal_var: 1.0,
            noise_var: 0.01,
        };
        let m = GpModel::with_hyper(&x, &y, h).unwrap();
        let k = |a: f64, b: f64| (-0.5 * ((a - b) / 0.5f64).powi(2)).exp();
        let pts = [0.0, 0.5, 1.0];
        let kmat = DMatrix::from_fn(3, 3, |i, j| k(pts[i], pts[j]) + if i == j { 0.01 } else { 0.0 });
        let ymean = 1.0;
        let ystd = (2.0f64 / 3.0).sqrt();
        let ys = DVector::from_iterator(3, y.iter().map(|v| (v - ymean) / ystd));
        let kinv = kmat.try_inverse().unwrap();
        let ks = DVector::from_iterator(3, pts.iter().map(|&p| k(0.3, p)));
        let mean = ymean + ystd * (ks.transpose() * &kinv * &ys)[0];
        let var = 1.0 + 0.01 - (ks.transpose() * &kinv * &ks)[0];
        let (mu, sd) = m.predict(&[0.3]);
        assert!((mu - mean).abs() < 1e-12);
        assert!((sd - ystd * var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn std_shrinks_when_query_is_added() {
        let x = scattered(12, 2, 9);
        let y: Vec<f64> = x.row_iter().map(|r| r[0] * 2.0 + r[1]).collect();
        let h = Hyper {
            lengths: vec![0.4, 0.4],
            signal_var: 1.0,
            noise_var: 1e-4,
        };
        let full = GpModel::with_hyper(&x, &y, h).unwrap();
        let q: Vec<f64> = x.row(11).iter().copied().collect();
        let keep: Vec<usize> = (0..11).collect();
        let fewer = full.condition_on(&keep).unwrap();
        assert!(full.predict(&q).1 <= fewer.predict(&q).1);
    }

    #[test]
    fn manifest_round_trip() {
        let x = scattered(9, 3, 5);
        let y: Vec<f64> = x.row_iter().map(|r| r.sum()).collect();
        let m = GpModel::fit(&x, &y, &quick()).unwrap();
        let back = GpModel::from_manifest(&m.to_manifest()).unwrap();
        assert_eq!(back.hyper(), m.hyper());
        assert_eq!(back.predict(&[0.2, 0.4, 0.6]), m.predict(&[0.2, 0.4, 0.6]));
        let mut tampered = m.to_manifest();
        tampered.set("train.000000", "0.0 0.0 0.0 123.0");
        assert!(GpModel::from_manifest(&tampered).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let x = scattered(1, 2, 1);
        assert!(matches!(GpModel::fit(&x, &[1.0], &quick()), Err(Error::TooFewPoints { .. })));
        let x = scattered(3, 2, 1);
        assert!(matches!(
            GpModel::fit(&x, &[1.0, f64::NAN, 0.0], &quick()),
            Err(Error::NonFiniteInput)
        ));
    }
}
