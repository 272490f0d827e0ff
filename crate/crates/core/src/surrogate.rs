//! Linear and locally-linear surrogates.
//!
//! A linear surrogate is one SVD basis of the whole snapshot matrix plus one
//! GP per leading weight. The locally-linear variant splits the columns by
//! cluster and builds an independent linear surrogate per cluster; a query
//! is routed to a cluster through its nearest training descriptor.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cluster::{ClusterModel, QueryAssigner};
use crate::error::{Error, Result};
use crate::gp::{fit_many, GpConfig, GpModel};
use crate::grid::CommonGrid;
use crate::manifest::Manifest;
use crate::meta::{ColumnDescriptor, QueryPoint, SimInputs, TimestepRule, Variable};
use crate::store::blocks::StagedDir;
use crate::store::{BlockSource, ColumnSubset};
use crate::svd::{rank_for_variance, svd_block_qr, SvdBasis, SvdOptions};

/// Smallest cluster a local surrogate is built for.
pub const MIN_CLUSTER_SIZE: usize = 3;
/// Seed stride between clusters, so per-weight seeds never collide.
const CLUSTER_SEED_STRIDE: u64 = 1_000_003;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    Linear,
    LocallyLinear,
}

impl std::fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SurrogateKind::Linear => "linear",
            SurrogateKind::LocallyLinear => "locally_linear",
        })
    }
}

impl std::str::FromStr for SurrogateKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "locally_linear" => Ok(Self::LocallyLinear),
            other => Err(Error::InvalidParameter(format!("unknown surrogate kind `{other}`"))),
        }
    }
}

/// How many weights to use for a prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPolicy {
    /// Number of leading weights that get a model.
    pub n_max: usize,
    /// A weight is trusted while its predicted std stays below this
    /// fraction of the spread of its training values.
    pub rel_std_threshold: f64,
    /// Percent of the squared spectrum the chosen count should capture.
    pub variance_target: f64,
}

impl Default for WeightPolicy {
    fn default() -> Self {
        Self {
            n_max: 50,
            rel_std_threshold: 0.5,
            variance_target: 90.0,
        }
    }
}

impl WeightPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        if !(self.variance_target > 0.0 && self.variance_target <= 100.0) {
            return Err(Error::InvalidParameter(format!(
                "variance target {} outside (0, 100]",
                self.variance_target
            )));
        }
        if !(self.rel_std_threshold >= 0.0) {
            return Err(Error::InvalidParameter("negative std threshold".into()));
        }
        Ok(())
    }
}

/// Outcome of [`select_n_weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSelection {
    pub n: usize,
    /// Leading weights whose uncertainty is acceptable.
    pub uncertainty_limit: usize,
    /// Smallest count reaching the variance target.
    pub variance_count: usize,
    pub warning: Option<String>,
}

/// Picks the number of weights from the predicted uncertainties.
///
/// `n` is the longest prefix of weights (capped at `n_max`) whose predicted
/// std is within `rel_std_threshold` times the training spread of the same
/// weight. When that is fewer than the variance-target count the prefix
/// still wins, and the conflict is reported in `warning`.
pub fn select_n_weights(
    predictions: &[(f64, f64)],
    train_spread: &[f64],
    sigma: &[f64],
    policy: &WeightPolicy,
) -> Result<WeightSelection> {
    policy.validate()?;
    if train_spread.len() < predictions.len() {
        return Err(Error::DimensionMismatch {
            expected: predictions.len(),
            actual: train_spread.len(),
        });
    }
    let cap = policy.n_max.min(predictions.len());
    let uncertainty_limit = (0..cap)
        .find(|&i| predictions[i].1 > policy.rel_std_threshold * train_spread[i])
        .unwrap_or(cap);
    let variance_count = match rank_for_variance(sigma, policy.variance_target) {
        Ok(n) => n,
        Err(Error::AllZeroSpectrum) => 0,
        Err(e) => return Err(e),
    };
    let warning = (uncertainty_limit < variance_count).then(|| {
        format!(
            "only {uncertainty_limit} weights are within the uncertainty threshold, \
             {variance_count} are needed for {}% variance",
            policy.variance_target
        )
    });
    Ok(WeightSelection {
        n: uncertainty_limit,
        uncertainty_limit,
        variance_count,
        warning,
    })
}

/// Basis and weight models for one group of columns.
#[derive(Debug, Clone)]
pub struct LocalSurrogate {
    /// Columns of the full snapshot matrix in this group, ascending.
    pub columns: Vec<usize>,
    pub basis: SvdBasis,
    pub models: Vec<GpModel>,
    /// Per modeled weight, the population std of its training values.
    pub train_spread: Vec<f64>,
    /// Per input, the training range `(min, max)`.
    pub input_bounds: Vec<(f64, f64)>,
}

impl LocalSurrogate {
    fn fit<S: BlockSource + ?Sized>(
        x: &S,
        columns: Vec<usize>,
        descriptors: &[ColumnDescriptor],
        n_max: usize,
        gp: &GpConfig,
    ) -> Result<Self> {
        let sub = ColumnSubset::new(x, columns.clone())?;
        let basis = svd_block_qr(&sub, &SvdOptions::default())?;
        let weights = basis.project_matrix(&sub)?;
        let n_models = n_max.min(basis.n_basis());
        let inputs = design_matrix(columns.iter().map(|&c| &descriptors[c]));
        let targets = weights.rows(0, n_models).transpose();
        let models = fit_many(&inputs, &targets, gp)?;
        Ok(Self::assemble(columns, basis, models, &inputs))
    }

    fn assemble(columns: Vec<usize>, basis: SvdBasis, models: Vec<GpModel>, inputs: &DMatrix<f64>) -> Self {
        let train_spread = models
            .iter()
            .map(|m| {
                let y = m.train_targets();
                let mean = y.iter().sum::<f64>() / y.len() as f64;
                (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
            })
            .collect();
        let input_bounds = inputs
            .column_iter()
            .map(|c| (c.min(), c.max()))
            .collect();
        Self {
            columns,
            basis,
            models,
            train_spread,
            input_bounds,
        }
    }

    /// Training targets of model `i`, in column order.
    pub fn training_weights(&self, i: usize) -> &[f64] {
        self.models[i].train_targets()
    }
}

/// Regression inputs `(h, v, r, t)`, one row per descriptor.
pub fn design_matrix<'a>(descs: impl Iterator<Item = &'a ColumnDescriptor>) -> DMatrix<f64> {
    let rows: Vec<[f64; 4]> = descs.map(|d| d.features()).collect();
    DMatrix::from_fn(rows.len(), 4, |i, j| rows[i][j])
}

/// A fitted surrogate for one variable.
#[derive(Debug, Clone)]
pub struct SurrogateBundle {
    pub kind: SurrogateKind,
    pub variable: Option<Variable>,
    /// Rule giving the run length of a simulation at new inputs.
    pub rule: Option<TimestepRule>,
    pub grid: CommonGrid,
    pub policy: WeightPolicy,
    pub gp: GpConfig,
    pub descriptors: Vec<ColumnDescriptor>,
    pub clusters: Vec<LocalSurrogate>,
    pub cluster_model: Option<ClusterModel>,
    assigner: QueryAssigner,
}

/// Predicted field plus the per-weight report.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub cluster: usize,
    pub n_used: usize,
    /// `(mean, std)` for every modeled weight.
    pub weights: Vec<(f64, f64)>,
    pub field: Vec<f64>,
    pub selection: Option<WeightSelection>,
    pub warnings: Vec<String>,
}

fn check_layout<S: BlockSource + ?Sized>(x: &S, grid: &CommonGrid, descriptors: &[ColumnDescriptor]) -> Result<()> {
    if x.n_rows() != grid.n_points() || x.n_blocks() != grid.n_blocks() {
        return Err(Error::DimensionMismatch {
            expected: grid.n_points(),
            actual: x.n_rows(),
        });
    }
    if (0..x.n_blocks()).any(|k| x.block_rows(k) != grid.block_rows(k)) {
        return Err(Error::InvalidParameter("matrix blocks do not match the grid".into()));
    }
    if descriptors.len() != x.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: x.n_cols(),
            actual: descriptors.len(),
        });
    }
    Ok(())
}

fn cluster_gp(gp: &GpConfig, c: usize) -> GpConfig {
    GpConfig {
        seed: gp.seed.wrapping_add(c as u64 * CLUSTER_SEED_STRIDE),
        ..gp.clone()
    }
}

impl SurrogateBundle {
    /// One basis for all columns.
    pub fn fit_linear<S: BlockSource + ?Sized>(
        x: &S,
        descriptors: &[ColumnDescriptor],
        grid: &CommonGrid,
        policy: &WeightPolicy,
        gp: &GpConfig,
    ) -> Result<Self> {
        policy.validate()?;
        check_layout(x, grid, descriptors)?;
        let all: Vec<usize> = (0..x.n_cols()).collect();
        let local = LocalSurrogate::fit(x, all, descriptors, policy.n_max, &cluster_gp(gp, 0))?;
        let labels = vec![0; descriptors.len()];
        Ok(Self {
            kind: SurrogateKind::Linear,
            variable: None,
            rule: None,
            grid: grid.clone(),
            policy: *policy,
            gp: gp.clone(),
            assigner: QueryAssigner::new(descriptors, &labels)?,
            descriptors: descriptors.to_vec(),
            clusters: vec![local],
            cluster_model: None,
        })
    }

    /// One basis per cluster of `model`.
    pub fn fit_locally_linear<S: BlockSource + ?Sized>(
        x: &S,
        descriptors: &[ColumnDescriptor],
        grid: &CommonGrid,
        model: &ClusterModel,
        policy: &WeightPolicy,
        gp: &GpConfig,
    ) -> Result<Self> {
        policy.validate()?;
        check_layout(x, grid, descriptors)?;
        if model.labels.len() != x.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: x.n_cols(),
                actual: model.labels.len(),
            });
        }
        let members = model.members();
        for (c, m) in members.iter().enumerate() {
            if m.len() < MIN_CLUSTER_SIZE {
                return Err(Error::ClusterTooSmall {
                    cluster: c,
                    size: m.len(),
                    min: MIN_CLUSTER_SIZE,
                });
            }
        }
        let clusters = members
            .into_iter()
            .enumerate()
            .map(|(c, cols)| LocalSurrogate::fit(x, cols, descriptors, policy.n_max, &cluster_gp(gp, c)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: SurrogateKind::LocallyLinear,
            variable: None,
            rule: None,
            grid: grid.clone(),
            policy: *policy,
            gp: gp.clone(),
            assigner: QueryAssigner::new(descriptors, &model.labels)?,
            descriptors: descriptors.to_vec(),
            clusters,
            cluster_model: Some(model.clone()),
        })
    }

    pub fn with_variable(mut self, v: Variable) -> Self {
        self.variable = Some(v);
        self
    }

    pub fn with_rule(mut self, rule: TimestepRule) -> Self {
        self.rule = Some(rule);
        self
    }

    /// Query at timestep `t_last - back` of a simulation with `inputs`,
    /// using the stored rule (or the default one).
    pub fn query_from_end(&self, inputs: SimInputs, back: usize) -> Result<QueryPoint> {
        let t_last = self.rule.unwrap_or_default().t_last(inputs.he_length, inputs.tip_velocity);
        if back > t_last {
            return Err(Error::OutOfDomain {
                what: "timestep offset",
                value: back as f64,
                lo: 0.0,
                hi: t_last as f64,
            });
        }
        Ok(QueryPoint {
            inputs,
            t: (t_last - back) as f64,
            t_last: t_last as f64,
        })
    }

    /// Cluster a query is routed to.
    pub fn cluster_of(&self, q: &QueryPoint) -> usize {
        match self.kind {
            SurrogateKind::Linear => 0,
            SurrogateKind::LocallyLinear => self.assigner.assign(q),
        }
    }

    /// Predicts the field at `q`. With `n = None` the weight count comes from
    /// [`select_n_weights`]; otherwise `n` is used as given.
    pub fn predict_field(&self, q: &QueryPoint, n: Option<usize>) -> Result<Prediction> {
        let c = self.cluster_of(q);
        let local = &self.clusters[c];
        let features = q.features();
        let weights: Vec<(f64, f64)> = local.models.par_iter().map(|m| m.predict(&features)).collect();

        let mut warnings = Vec::new();
        const NAMES: [&str; 4] = ["h", "v", "r", "t"];
        for (j, &(lo, hi)) in local.input_bounds.iter().enumerate() {
            if features[j] < lo || features[j] > hi {
                warnings.push(format!(
                    "extrapolation: {} = {} outside training range [{lo}, {hi}] of cluster {c}",
                    NAMES[j], features[j]
                ));
            }
        }

        let (n_used, selection) = match n {
            Some(n) => {
                if n > local.models.len() {
                    return Err(Error::DimensionMismatch {
                        expected: local.models.len(),
                        actual: n,
                    });
                }
                (n, None)
            }
            None => {
                let s = select_n_weights(&weights, &local.train_spread, local.basis.sigma(), &self.policy)?;
                if let Some(w) = &s.warning {
                    warnings.push(w.clone());
                }
                (s.n, Some(s))
            }
        };
        let means: Vec<f64> = weights.iter().map(|w| w.0).collect();
        let field = local.basis.reconstruct(&means, n_used)?;
        Ok(Prediction {
            cluster: c,
            n_used,
            weights,
            field,
            selection,
            warnings,
        })
    }

    /// Number of weight models in the smallest cluster.
    pub fn n_models(&self) -> usize {
        self.clusters.iter().map(|c| c.models.len()).min().unwrap_or(0)
    }

    /// Writes the bundle directory atomically.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let staged = StagedDir::new(dir)?;
        let mut m = Manifest::new();
        m.push("format", "stsurr-bundle");
        m.push("version", 1);
        m.push("kind", self.kind);
        if let Some(v) = self.variable {
            m.push("variable", v);
        }
        if let Some(r) = self.rule {
            m.push("rule.divisor", format!("{:?}", r.divisor));
            m.push("rule.offset", r.offset);
        }
        m.push("policy.n_max", self.policy.n_max);
        m.push("policy.rel_std_threshold", format!("{:?}", self.policy.rel_std_threshold));
        m.push("policy.variance_target", format!("{:?}", self.policy.variance_target));
        m.push("gp.restarts", self.gp.restarts);
        m.push("gp.max_iter", self.gp.max_iter);
        m.push("gp.grad_tol", format!("{:?}", self.gp.grad_tol));
        m.push("gp.seed", self.gp.seed);
        m.push("n_clusters", self.clusters.len());
        self.grid.write_manifest(&mut m);
        for (j, d) in self.descriptors.iter().enumerate() {
            m.push(format!("column.{j:06}"), d.render());
        }
        for (c, local) in self.clusters.iter().enumerate() {
            m.push(format!("cluster.{c:03}.n_models"), local.models.len());
            let cdir = staged.tmp.join(format!("cluster_{c:03}"));
            std::fs::create_dir_all(&cdir).map_err(|e| Error::io(&cdir, e))?;
            local.basis.save(&cdir.join("basis"), &self.grid)?;
            let mut cm = Manifest::new();
            cm.push("columns", crate::manifest::join_display(&local.columns));
            cm.write(&cdir.join("members.txt"))?;
            for (i, model) in local.models.iter().enumerate() {
                model.save(&cdir.join(format!("weight_{i:03}.txt")))?;
            }
        }
        if let Some(cm) = &self.cluster_model {
            cm.save(&staged.tmp.join("clusters.txt"))?;
        }
        m.write(&staged.tmp.join("bundle.txt"))?;
        staged.commit()
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = Manifest::read(&dir.join("bundle.txt"))?;
        if m.require("format")? != "stsurr-bundle" {
            return Err(Error::format("bundle", "not a surrogate bundle"));
        }
        let kind: SurrogateKind = m.parse("kind")?;
        let variable = m.get("variable").map(str::parse).transpose()?;
        let rule = match m.get("rule.divisor") {
            Some(_) => Some(TimestepRule {
                divisor: m.parse("rule.divisor")?,
                offset: m.parse("rule.offset")?,
            }),
            None => None,
        };
        let policy = WeightPolicy {
            n_max: m.parse("policy.n_max")?,
            rel_std_threshold: m.parse("policy.rel_std_threshold")?,
            variance_target: m.parse("policy.variance_target")?,
        };
        let gp = GpConfig {
            restarts: m.parse("gp.restarts")?,
            max_iter: m.parse("gp.max_iter")?,
            grad_tol: m.parse("gp.grad_tol")?,
            seed: m.parse("gp.seed")?,
        };
        let grid = CommonGrid::read_manifest(&m)?;
        let descriptors = m
            .with_prefix("column.")
            .map(|(_, v)| ColumnDescriptor::parse(v))
            .collect::<Result<Vec<_>>>()?;
        let n_clusters: usize = m.parse("n_clusters")?;
        let mut clusters = Vec::with_capacity(n_clusters);
        let mut labels = vec![usize::MAX; descriptors.len()];
        for c in 0..n_clusters {
            let cdir = dir.join(format!("cluster_{c:03}"));
            let basis = SvdBasis::load(&cdir.join("basis"))?;
            let columns: Vec<usize> = Manifest::read(&cdir.join("members.txt"))?.parse_list("columns")?;
            for &col in &columns {
                *labels.get_mut(col).ok_or(Error::IndexOutOfRange {
                    index: col,
                    len: descriptors.len(),
                })? = c;
            }
            let n_models: usize = m.parse(&format!("cluster.{c:03}.n_models"))?;
            let models = (0..n_models)
                .map(|i| GpModel::load(&cdir.join(format!("weight_{i:03}.txt"))))
                .collect::<Result<Vec<_>>>()?;
            let inputs = design_matrix(columns.iter().map(|&i| &descriptors[i]));
            clusters.push(LocalSurrogate::assemble(columns, basis, models, &inputs));
        }
        if labels.contains(&usize::MAX) {
            return Err(Error::format("bundle", "some columns belong to no cluster"));
        }
        let cluster_model = match kind {
            SurrogateKind::LocallyLinear => Some(ClusterModel::load(&dir.join("clusters.txt"))?),
            SurrogateKind::Linear => None,
        };
        Ok(Self {
            kind,
            variable,
            rule,
            grid,
            policy,
            gp,
            assigner: QueryAssigner::new(&descriptors, &labels)?,
            descriptors,
            clusters,
            cluster_model,
        })
    }
}

/// Values along the grid row nearest to `y`, for cell centers with x in
/// `[x_lo, x_hi]`, in ascending x.
pub fn lineout(field: &[f64], grid: &CommonGrid, y: f64, x_lo: f64, x_hi: f64) -> Result<Vec<(f64, f64)>> {
    if field.len() != grid.n_points() {
        return Err(Error::DimensionMismatch {
            expected: grid.n_points(),
            actual: field.len(),
        });
    }
    if !(y >= grid.y_min && y <= grid.y_max) {
        return Err(Error::OutOfDomain {
            what: "lineout y",
            value: y,
            lo: grid.y_min,
            hi: grid.y_max,
        });
    }
    for v in [x_lo, x_hi] {
        if !(v >= grid.x_min && v <= grid.x_max) {
            return Err(Error::OutOfDomain {
                what: "lineout x",
                value: v,
                lo: grid.x_min,
                hi: grid.x_max,
            });
        }
    }
    if x_lo > x_hi {
        return Err(Error::OutOfDomain {
            what: "lineout x range",
            value: x_lo,
            lo: grid.x_min,
            hi: x_hi,
        });
    }
    let j = grid.nearest_row(y);
    Ok((0..grid.nx)
        .map(|i| (grid.x_center(i), field[j * grid.nx + i]))
        .filter(|&(x, _)| x >= x_lo && x <= x_hi)
        .collect())
}

/// Scanning from the right, the first x where the lineout reaches
/// `fraction * max`, linearly interpolated between samples.
pub fn locate_plate_edge(line: &[(f64, f64)], fraction: f64) -> Option<f64> {
    let max = line.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if line.is_empty() || !(max > 0.0) {
        return None;
    }
    let thr = fraction * max;
    let last = line.len() - 1;
    if line[last].1 >= thr {
        return Some(line[last].0);
    }
    for i in (0..last).rev() {
        let (xa, va) = line[i + 1];
        let (xb, vb) = line[i];
        if vb >= thr {
            return Some(xa + (thr - va) / (vb - va) * (xb - xa));
        }
    }
    None
}

/// `||a - b|| / ||b||`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::SimInputs;
    use crate::store::DenseBlocks;

    #[test]
    fn selection_rules() {
        let p = WeightPolicy {
            n_max: 5,
            rel_std_threshold: 0.5,
            variance_target: 90.0,
        };
        let sigma = [5.0, 3.0, 1.0, 0.5, 0.1];
        let zeros = vec![(0.0, 0.0); 5];
        assert_eq!(select_n_weights(&zeros, &[1.0; 5], &sigma, &p).unwrap().n, 5);
        let mixed = vec![(0.0, 0.0), (0.0, 0.0), (0.0, 10.0), (0.0, 0.0), (0.0, 0.0)];
        let s = select_n_weights(&mixed, &[1.0; 5], &sigma, &p).unwrap();
        assert_eq!(s.n, 2);
        assert_eq!(s.variance_count, 2);
        assert!(s.warning.is_none());
        let worse = vec![(0.0, 0.0), (0.0, 10.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)];
        let s = select_n_weights(&worse, &[1.0; 5], &sigma, &p).unwrap();
        assert_eq!(s.n, 1);
        assert!(s.warning.is_some());
    }

    #[test]
    fn lineout_and_edges() {
        let grid = CommonGrid::new(-16.0, 0.0, 0.0, 8.0, 0.25, 2).unwrap();
        let c = vec![3.0; grid.n_points()];
        let line = lineout(&c, &grid, 6.0063, -15.5, -10.5).unwrap();
        assert!(line.iter().all(|p| p.1 == 3.0));
        assert_eq!(line.len(), 20);
        assert!(line.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(matches!(lineout(&c, &grid, 9.0, -15.0, -1.0), Err(Error::OutOfDomain { .. })));
        assert!(matches!(lineout(&c, &grid, 1.0, -17.0, -1.0), Err(Error::OutOfDomain { .. })));

        let step: Vec<f64> = (0..grid.n_points())
            .map(|k| if grid.cell_center(k).0 < -12.0 { 1.0 } else { 0.0 })
            .collect();
        let line = lineout(&step, &grid, 6.0, -15.5, -10.5).unwrap();
        let edge = locate_plate_edge(&line, 0.5).unwrap();
        assert!((edge + 12.0).abs() <= grid.delta, "{edge}");

        assert_eq!(locate_plate_edge(&[(0.0, 0.0), (1.0, 0.0)], 0.5), None);
        let ramp: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 4.0 - i as f64)).collect();
        // max 4, threshold 1 reached between x = 3 (1.0)... exactly at x = 3.
        assert_eq!(locate_plate_edge(&ramp, 0.25), Some(3.0));
        assert_eq!(locate_plate_edge(&ramp, 0.3), Some(3.0 - 0.2));
    }

    #[test]
    fn two_column_ensemble_reconstructs_exactly() {
        let grid = CommonGrid::new(-4.0, 0.0, 0.0, 2.0, 0.5, 2).unwrap();
        let inputs = SimInputs::new(10.0, 0.8, 0.2).unwrap();
        let descs: Vec<ColumnDescriptor> = (0..2)
            .map(|t| ColumnDescriptor {
                sim_key: "a".into(),
                timestep: t,
                inputs,
                n_timesteps: 2,
            })
            .collect();
        let x = DMatrix::from_fn(grid.n_points(), 2, |i, j| ((i + 3 * j) as f64).sin());
        let counts: Vec<usize> = (0..2).map(|k| grid.block_rows(k).len()).collect();
        let src = DenseBlocks::split(&x, &counts).unwrap();
        let gp = GpConfig {
            restarts: 2,
            ..GpConfig::default()
        };
        let b = SurrogateBundle::fit_linear(&src, &descs, &grid, &WeightPolicy::default(), &gp).unwrap();
        assert_eq!(b.clusters[0].basis.sigma().len(), 2);
        assert_eq!(b.n_models(), 2);
        let w = b.clusters[0].basis.project(x.column(1).as_slice()).unwrap();
        let back = b.clusters[0].basis.reconstruct(&w.values, 2).unwrap();
        assert!(relative_l2(&back, x.column(1).as_slice()) < 1e-12);

        let dir = tempfile::tempdir().unwrap();
        b.save(&dir.path().join("bundle")).unwrap();
        let loaded = SurrogateBundle::load(&dir.path().join("bundle")).unwrap();
        let q = QueryPoint::from(&descs[1]);
        assert_eq!(loaded.predict_field(&q, Some(2)).unwrap(), b.predict_field(&q, Some(2)).unwrap());
    }
}
