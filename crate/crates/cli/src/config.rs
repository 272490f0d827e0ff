//! Run settings: defaults, then a flat `key = value` config file, then flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use stsurr::cluster::StabilityConfig;
use stsurr::gp::GpConfig;
use stsurr::grid::CommonGrid;
use stsurr::manifest::Manifest;
use stsurr::meta::Variable;
use stsurr::store::DEFAULT_CROP_X_MIN;
use stsurr::surrogate::WeightPolicy;
use stsurr::synthetic::SyntheticSpec;

/// Every key a config file may set.
pub const KEYS: &[&str] = &[
    "seed",
    "workers",
    "variable",
    "blocks",
    "grid",
    "crop_xmin",
    "n_weights",
    "k",
    "k_min",
    "k_max",
    "proj_dim",
    "proj_seeds",
    "kmeans_seeds",
    "n_init",
    "gp.restarts",
    "gp.max_iter",
    "gp.grad_tol",
    "policy.n_max",
    "policy.rel_std_threshold",
    "policy.variance_target",
    "lineout.y",
    "lineout.x_min",
    "lineout.x_max",
    "edge_fraction",
    "candidates",
    "synth.noise",
    "raw_dir",
    "store_dir",
    "bundle_dir",
    "out_dir",
];

#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    /// Whether the seed came from the config or a flag.
    pub seed_explicit: bool,
    pub workers: Option<usize>,
    pub variables: Vec<Variable>,
    pub grid: CommonGrid,
    pub crop_x_min: f64,
    pub n_weights: Option<usize>,
    pub k: Option<usize>,
    pub stability: StabilityConfig,
    pub gp: GpConfig,
    pub policy: WeightPolicy,
    pub lineout_y: f64,
    pub lineout_x: (f64, f64),
    pub edge_fraction: f64,
    pub candidates: usize,
    pub synth_noise: f64,
    pub raw_dir: Option<PathBuf>,
    pub store_dir: Option<PathBuf>,
    pub bundle_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seed: 0,
            seed_explicit: false,
            workers: None,
            variables: vec![Variable::Mass],
            grid: SyntheticSpec::default_grid(),
            crop_x_min: DEFAULT_CROP_X_MIN,
            n_weights: None,
            k: None,
            stability: StabilityConfig::default(),
            gp: GpConfig::default(),
            policy: WeightPolicy::default(),
            lineout_y: 6.0063,
            lineout_x: (-15.5, -10.5),
            edge_fraction: 0.5,
            candidates: stsurr::sampling::DEFAULT_CANDIDATES,
            synth_noise: 0.0,
            raw_dir: None,
            store_dir: None,
            bundle_dir: None,
            out_dir: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| anyhow::anyhow!("bad value `{value}` for `{key}`: {e}"))
}

fn parse_floats(key: &str, value: &str, n: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = value
        .split(',')
        .map(|t| parse(key, t))
        .collect::<Result<_>>()?;
    if v.len() != n {
        bail!("`{key}` needs {n} comma-separated numbers, got `{value}`");
    }
    Ok(v)
}

/// Parses `mass`, `x_momentum`, `y_momentum`, `all`, or a comma list.
pub fn parse_variables(value: &str) -> Result<Vec<Variable>> {
    if value.trim() == "all" {
        return Ok(Variable::ALL.to_vec());
    }
    let mut out: Vec<Variable> = Vec::new();
    for t in value.split(',') {
        let v: Variable = t.trim().parse()?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

impl Settings {
    pub fn load(config: Option<&Path>) -> Result<Self> {
        let mut s = Self::default();
        if let Some(path) = config {
            let m = Manifest::read(path).with_context(|| format!("reading config {}", path.display()))?;
            for (k, v) in m.entries() {
                s.apply(k, v)?;
            }
        }
        Ok(s)
    }

    /// Sets one key; used for config entries and flag overrides alike.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => {
                self.seed = parse(key, value)?;
                self.seed_explicit = true;
                self.stability.seed = self.seed;
                self.gp.seed = self.seed;
            }
            "workers" => self.workers = Some(parse(key, value)?),
            "variable" => self.variables = parse_variables(value)?,
            "blocks" => {
                let k: usize = parse(key, value)?;
                if k == 0 {
                    bail!("`blocks` must be at least 1");
                }
                self.grid = self.grid.reblocked(k)?;
            }
            "grid" => {
                let g = parse_floats(key, value, 5)?;
                self.grid = CommonGrid::new(g[0], g[1], g[2], g[3], g[4], self.grid.n_blocks())?;
            }
            "crop_xmin" => self.crop_x_min = parse(key, value)?,
            "n_weights" => self.n_weights = Some(parse(key, value)?),
            "k" => self.k = Some(parse(key, value)?),
            "k_min" => self.stability.k_min = parse(key, value)?,
            "k_max" => self.stability.k_max = parse(key, value)?,
            "proj_dim" => self.stability.proj_dim = parse(key, value)?,
            "proj_seeds" => self.stability.n_proj_seeds = parse(key, value)?,
            "kmeans_seeds" => self.stability.n_kmeans_seeds = parse(key, value)?,
            "n_init" => self.stability.n_init = parse(key, value)?,
            "gp.restarts" => self.gp.restarts = parse(key, value)?,
            "gp.max_iter" => self.gp.max_iter = parse(key, value)?,
            "gp.grad_tol" => self.gp.grad_tol = parse(key, value)?,
            "policy.n_max" => self.policy.n_max = parse(key, value)?,
            "policy.rel_std_threshold" => self.policy.rel_std_threshold = parse(key, value)?,
            "policy.variance_target" => self.policy.variance_target = parse(key, value)?,
            "lineout.y" => self.lineout_y = parse(key, value)?,
            "lineout.x_min" => self.lineout_x.0 = parse(key, value)?,
            "lineout.x_max" => self.lineout_x.1 = parse(key, value)?,
            "edge_fraction" => self.edge_fraction = parse(key, value)?,
            "candidates" => self.candidates = parse(key, value)?,
            "synth.noise" => self.synth_noise = parse(key, value)?,
            "raw_dir" => self.raw_dir = Some(value.into()),
            "store_dir" => self.store_dir = Some(value.into()),
            "bundle_dir" => self.bundle_dir = Some(value.into()),
            "out_dir" => self.out_dir = Some(value.into()),
            other => bail!("unknown config key `{other}` (known: {})", KEYS.join(", ")),
        }
        Ok(())
    }

    pub fn variable(&self) -> Variable {
        self.variables[0]
    }

    pub fn log(&self) {
        log::info!(
            "seed={} workers={:?} variables={:?} blocks={} proj_dim={} k={:?} gp.restarts={}",
            self.seed,
            self.workers,
            self.variables,
            self.grid.n_blocks(),
            self.stability.proj_dim,
            self.k,
            self.gp.restarts
        );
    }
}

/// A path from a flag, falling back to the config.
pub fn require_path(flag: Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    match flag.or_else(|| config.clone()) {
        Some(p) => Ok(p),
        None => bail!("missing path: pass --{name} or set {}_dir in the config", name),
    }
}
