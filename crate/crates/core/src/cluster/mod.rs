//! Snapshot clustering for the locally-linear surrogate.
//!
//! Snapshots are compressed with a very sparse random projection and grouped
//! with k-means. The number of clusters is picked by how reproducible the
//! partition is across projection and k-means seeds. New queries, which have
//! no field yet, are routed through the nearest training descriptor.

pub mod kmeans;
pub mod projection;

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::manifest::{join_display, join_floats, Manifest};
use crate::meta::{ColumnDescriptor, QueryPoint};
use crate::rng::derive_seed;
use crate::store::BlockSource;

pub use kmeans::{adjusted_rand_index, kmeans, KMeansResult, DEFAULT_N_INIT, MAX_LLOYD_ITER};
pub use projection::{project_vector, sparse_random_project, ProjectionSpec, DEFAULT_PROJ_DIM};

/// Minimum mean pairwise ARI for a k to count as stable.
pub const STABILITY_THRESHOLD: f64 = 0.9;

/// A fitted clustering of the snapshot columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub labels: Vec<usize>,
    /// `k x d` centroids in projected space.
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    pub projection: ProjectionSpec,
    pub kmeans_seed: u64,
    pub n_init: usize,
}

impl ClusterModel {
    /// Projects the columns of `x` and clusters them.
    pub fn fit<S: BlockSource + ?Sized>(
        x: &S,
        k: usize,
        projection: ProjectionSpec,
        n_init: usize,
        kmeans_seed: u64,
    ) -> Result<Self> {
        let points = sparse_random_project(x, &projection)?;
        Self::fit_points(&points, k, projection, n_init, kmeans_seed)
    }

    /// Clusters already-projected points (`N x d`).
    pub fn fit_points(
        points: &DMatrix<f64>,
        k: usize,
        projection: ProjectionSpec,
        n_init: usize,
        kmeans_seed: u64,
    ) -> Result<Self> {
        let r = kmeans(points, k, n_init, kmeans_seed)?;
        Ok(Self {
            k,
            labels: r.labels,
            centroids: r.centroids,
            inertia: r.inertia,
            projection,
            kmeans_seed,
            n_init,
        })
    }

    /// A single cluster holding all `n` columns.
    pub fn trivial(n: usize) -> Self {
        Self {
            k: 1,
            labels: vec![0; n],
            centroids: DMatrix::zeros(1, 0),
            inertia: 0.0,
            projection: ProjectionSpec {
                seed: 0,
                dim: 0,
                density: 1.0,
            },
            kmeans_seed: 0,
            n_init: 0,
        }
    }

    /// Column indices per cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members().iter().map(Vec::len).collect()
    }

    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.push("k", self.k);
        m.push("n_points", self.labels.len());
        m.push("inertia", format!("{:?}", self.inertia));
        m.push("projection.seed", self.projection.seed);
        m.push("projection.dim", self.projection.dim);
        m.push("projection.density", format!("{:?}", self.projection.density));
        m.push("kmeans.seed", self.kmeans_seed);
        m.push("kmeans.n_init", self.n_init);
        m.push("sizes", join_display(&self.sizes()));
        m.push("labels", join_display(&self.labels));
        for c in 0..self.centroids.nrows() {
            let row: Vec<f64> = self.centroids.row(c).iter().copied().collect();
            m.push(format!("centroid.{c:03}"), join_floats(&row));
        }
        m
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let k: usize = m.parse("k")?;
        let labels: Vec<usize> = m.parse_list("labels")?;
        if labels.len() != m.parse::<usize>("n_points")? || labels.iter().any(|&l| l >= k) {
            return Err(Error::format("cluster model", "labels inconsistent with k"));
        }
        let projection = ProjectionSpec {
            seed: m.parse("projection.seed")?,
            dim: m.parse("projection.dim")?,
            density: m.parse("projection.density")?,
        };
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|c| m.parse_list(&format!("centroid.{c:03}")))
            .collect::<Result<_>>()?;
        let d = rows.first().map_or(0, Vec::len);
        let centroids = DMatrix::from_fn(k, d, |i, j| rows[i][j]);
        Ok(Self {
            k,
            labels,
            centroids,
            inertia: m.parse("inertia")?,
            projection,
            kmeans_seed: m.parse("kmeans.seed")?,
            n_init: m.parse("kmeans.n_init")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_manifest().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_manifest(&Manifest::read(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub n_proj_seeds: usize,
    pub n_kmeans_seeds: usize,
    pub n_init: usize,
    pub proj_dim: usize,
    /// Projection density; `None` means `sqrt(D)`.
    pub density: Option<f64>,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 6,
            n_proj_seeds: 3,
            n_kmeans_seeds: 3,
            n_init: DEFAULT_N_INIT,
            proj_dim: DEFAULT_PROJ_DIM,
            density: None,
            seed: 0,
            threshold: STABILITY_THRESHOLD,
        }
    }
}

/// Mean pairwise ARI per k, and the chosen k.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// `(k, mean ARI)` for `k_min..=k_max + 1` (where `k <= N`).
    pub table: Vec<(usize, f64)>,
    pub chosen: usize,
}

impl StabilityReport {
    pub fn ari(&self, k: usize) -> Option<f64> {
        self.table.iter().find(|r| r.0 == k).map(|r| r.1)
    }
}

/// Projection spec for stability run `i`.
pub fn stability_projection(cfg: &StabilityConfig, i: usize, n_rows: usize) -> ProjectionSpec {
    let spec = ProjectionSpec::new(derive_seed(cfg.seed, 1000 + i as u64), cfg.proj_dim, n_rows);
    match cfg.density {
        Some(s) => spec.with_density(s),
        None => spec,
    }
}

/// Picks the number of clusters by partition stability.
///
/// Every `(projection seed, k-means seed)` pair yields one labeling per k;
/// the score of k is the mean ARI over all pairs of its labelings. The choice
/// is the smallest k in range whose score reaches the threshold and beats the
/// score of k + 1. If none does, the highest-scoring k wins, smallest first.
pub fn choose_k<S: BlockSource + ?Sized>(x: &S, cfg: &StabilityConfig) -> Result<StabilityReport> {
    let sets = (0..cfg.n_proj_seeds.max(1))
        .map(|i| sparse_random_project(x, &stability_projection(cfg, i, x.n_rows())))
        .collect::<Result<Vec<_>>>()?;
    choose_k_points(&sets, cfg)
}

/// [`choose_k`] over point sets that are already projected, one per
/// projection seed.
pub fn choose_k_points(point_sets: &[DMatrix<f64>], cfg: &StabilityConfig) -> Result<StabilityReport> {
    if cfg.k_min == 0 || cfg.k_min > cfg.k_max {
        return Err(Error::InvalidParameter(format!(
            "empty k range {}..={}",
            cfg.k_min, cfg.k_max
        )));
    }
    let n = point_sets.first().map_or(0, |p| p.nrows());
    if n == 0 {
        return Err(Error::EmptyModel);
    }
    if cfg.k_min > n {
        return Err(Error::KExceedsN { k: cfg.k_min, n });
    }
    let km_seeds: Vec<u64> = (0..cfg.n_kmeans_seeds.max(1))
        .map(|j| derive_seed(cfg.seed, 2000 + j as u64))
        .collect();

    let mut table = Vec::new();
    for k in cfg.k_min..=(cfg.k_max + 1).min(n) {
        let mut labelings = Vec::new();
        for points in point_sets {
            for &s in &km_seeds {
                labelings.push(kmeans(points, k, cfg.n_init, s)?.labels);
            }
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for a in 0..labelings.len() {
            for b in a + 1..labelings.len() {
                sum += adjusted_rand_index(&labelings[a], &labelings[b]);
                pairs += 1;
            }
        }
        table.push((k, if pairs == 0 { 1.0 } else { sum / pairs as f64 }));
    }

    let score = |k: usize| table.iter().find(|r| r.0 == k).map(|r| r.1);
    let in_range: Vec<(usize, f64)> = table.iter().copied().filter(|r| r.0 <= cfg.k_max).collect();
    let stable = in_range.iter().find(|&&(k, s)| {
        s >= cfg.threshold && score(k + 1).is_none_or(|next| s > next)
    });
    let chosen = match stable {
        Some(&(k, _)) => k,
        None => in_range
            .iter()
            .fold(None::<(usize, f64)>, |best, &(k, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((k, s)),
            })
            .map(|(k, _)| k)
            .unwrap(),
    };
    Ok(StabilityReport { table, chosen })
}

/// Routes queries to the cluster of the nearest training snapshot in
/// min-max normalized `(h, v, r, t / t_last)` space.
#[derive(Debug, Clone)]
pub struct QueryAssigner {
    features: Vec<[f64; 4]>,
    labels: Vec<usize>,
    lo: [f64; 4],
    range: [f64; 4],
}

fn descriptor_features(inputs: [f64; 3], t: f64, t_last: f64) -> [f64; 4] {
    let frac = if t_last > 0.0 { t / t_last } else { 0.0 };
    [inputs[0], inputs[1], inputs[2], frac]
}

impl QueryAssigner {
    pub fn new(descriptors: &[ColumnDescriptor], labels: &[usize]) -> Result<Self> {
        if descriptors.is_empty() {
            return Err(Error::EmptyModel);
        }
        if descriptors.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: descriptors.len(),
                actual: labels.len(),
            });
        }
        let features: Vec<[f64; 4]> = descriptors
            .iter()
            .map(|d| {
                let q = QueryPoint::from(d);
                descriptor_features([q.inputs.he_length, q.inputs.tip_velocity, q.inputs.radius], q.t, q.t_last)
            })
            .collect();
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for f in &features {
            for j in 0..4 {
                lo[j] = lo[j].min(f[j]);
                hi[j] = hi[j].max(f[j]);
            }
        }
        let range = std::array::from_fn(|j| if hi[j] > lo[j] { hi[j] - lo[j] } else { 1.0 });
        Ok(Self {
            features,
            labels: labels.to_vec(),
            lo,
            range,
        })
    }

    /// Index of the nearest training snapshot; ties go to the lowest index.
    pub fn nearest(&self, q: &QueryPoint) -> usize {
        let f = descriptor_features([q.inputs.he_length, q.inputs.tip_velocity, q.inputs.radius], q.t, q.t_last);
        let norm = |v: &[f64; 4]| -> [f64; 4] { std::array::from_fn(|j| (v[j] - self.lo[j]) / self.range[j]) };
        let qn = norm(&f);
        let mut best = (0, f64::INFINITY);
        for (i, tf) in self.features.iter().enumerate() {
            let tn = norm(tf);
            let d: f64 = (0..4).map(|j| (tn[j] - qn[j]).powi(2)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    pub fn assign(&self, q: &QueryPoint) -> usize {
        self.labels[self.nearest(q)]
    }
}

/// Cluster id for a query, from the training descriptors and their labels.
pub fn assign_query_cluster(model: &ClusterModel, descriptors: &[ColumnDescriptor], q: &QueryPoint) -> Result<usize> {
    Ok(QueryAssigner::new(descriptors, &model.labels)?.assign(q))
}
