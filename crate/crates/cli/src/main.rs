mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use stsurr::cluster::{choose_k, stability_projection, ClusterModel};
use stsurr::meta::{ColumnDescriptor, SimInputs};
use stsurr::rng::derive_seed;
use stsurr::sampling::{best_candidate_extend, read_sample_table, write_sample_table, InputBox};
use stsurr::store::raw::ENSEMBLE_FILE;
use stsurr::store::{preprocess_ensemble, BlockSnapshotMatrix, BlockSource, EnsembleManifest, SnapshotWriter};
use stsurr::surrogate::{lineout, locate_plate_edge, SurrogateBundle};
use stsurr::svd::cumulative_variance;
use stsurr::synthetic::{generate_ensemble, SyntheticSpec};

use config::{require_path, Settings};
use output::{num, StagedOutput, Tsv};

/// Snapshot surrogates for spatio-temporal simulation ensembles.
#[derive(Parser, Debug)]
#[command(name = "stsurr", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// mass, x_momentum, y_momentum, a comma list, or all.
    #[arg(long, global = true)]
    variable: Option<String>,
    /// Number of row blocks of the common grid.
    #[arg(long, global = true)]
    blocks: Option<usize>,
    /// Common grid as `xmin,xmax,ymin,ymax,delta`.
    #[arg(long, global = true)]
    grid: Option<String>,
    #[arg(long = "crop-xmin", global = true, allow_hyphen_values = true)]
    crop_xmin: Option<f64>,
    /// Weights used for reconstruction (default: uncertainty-based choice).
    #[arg(long = "n-weights", global = true)]
    n_weights: Option<usize>,
    /// Number of clusters (default: stability-based choice).
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Dimension of the random projection used for clustering.
    #[arg(long = "proj-dim", global = true)]
    proj_dim: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw or extend a best-candidate sample of (h, v, r).
    Sample {
        #[arg(long)]
        n: usize,
        /// Existing sample table to extend.
        #[arg(long)]
        extend: Option<PathBuf>,
        #[arg(long)]
        candidates: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic raw ensemble for a sample table.
    Synth {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Align, crop and remap raw dumps into block snapshot stores.
    Preprocess {
        #[arg(long)]
        raw: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Cluster snapshot columns, choosing k by stability unless given.
    Cluster {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a surrogate with one global basis.
    FitLinear {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a surrogate with one basis per cluster.
    FitLocal {
        #[arg(long)]
        store: Option<PathBuf>,
        /// Cluster output directory (from `cluster`).
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-out validation of every weight model in a bundle.
    Loo {
        #[arg(long)]
        bundle: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict fields at new inputs.
    Predict {
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Inputs as `h,v,r`.
        #[arg(long)]
        at: String,
        /// `tlast`, `tlast-K`, or a timestep number; repeatable.
        #[arg(long = "t", default_values_t = vec!["tlast".to_string(), "tlast-2".to_string()])]
        t: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract y-lineouts and plate-edge estimates from stored fields.
    Lineout {
        /// Block store directory holding the fields.
        #[arg(long)]
        field: PathBuf,
        /// Column to use; all columns when omitted.
        #[arg(long)]
        column: Option<usize>,
        #[arg(long, allow_hyphen_values = true)]
        y: Option<f64>,
        /// `x_min,x_max`.
        #[arg(long = "x-range", allow_hyphen_values = true)]
        x_range: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn settings(g: &GlobalArgs) -> Result<Settings> {
    let mut s = Settings::load(g.config.as_deref())?;
    let overrides: Vec<(&str, Option<String>)> = vec![
        ("seed", g.seed.map(|v| v.to_string())),
        ("workers", g.workers.map(|v| v.to_string())),
        ("variable", g.variable.clone()),
        ("grid", g.grid.clone()),
        ("blocks", g.blocks.map(|v| v.to_string())),
        ("crop_xmin", g.crop_xmin.map(|v| format!("{v:?}"))),
        ("n_weights", g.n_weights.map(|v| v.to_string())),
        ("k", g.k.map(|v| v.to_string())),
        ("proj_dim", g.proj_dim.map(|v| v.to_string())),
    ];
    for (k, v) in overrides {
        if let Some(v) = v {
            s.apply(k, &v)?;
        }
    }
    Ok(s)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<stsurr::Error>())
                .map_or("UsageError", stsurr::Error::kind);
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error\tkind={kind}\tmessage={msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let s = settings(&cli.global)?;
    if let Some(n) = s.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker pool")?;
    }
    s.log();
    match cli.command {
        Command::Sample {
            n,
            extend,
            candidates,
            out,
        } => cmd_sample(&s, n, extend.as_deref(), candidates, &out),
        Command::Synth { samples, out } => cmd_synth(&s, &samples, &require_path(out, &s.raw_dir, "out")?),
        Command::Preprocess { raw, store } => cmd_preprocess(
            &s,
            &require_path(raw, &s.raw_dir, "raw")?,
            &require_path(store, &s.store_dir, "store")?,
        ),
        Command::Cluster { store, out } => cmd_cluster(
            &s,
            &require_path(store, &s.store_dir, "store")?,
            &require_path(out, &s.out_dir, "out")?,
        ),
        Command::FitLinear { store, out } => cmd_fit(
            &s,
            &require_path(store, &s.store_dir, "store")?,
            None,
            &require_path(out, &s.bundle_dir, "out")?,
        ),
        Command::FitLocal { store, clusters, out } => cmd_fit(
            &s,
            &require_path(store, &s.store_dir, "store")?,
            Some(&clusters),
            &require_path(out, &s.bundle_dir, "out")?,
        ),
        Command::Loo { bundle, out } => cmd_loo(&require_path(bundle, &s.bundle_dir, "bundle")?, &out),
        Command::Predict { bundle, at, t, out } => cmd_predict(
            &s,
            &require_path(bundle, &s.bundle_dir, "bundle")?,
            &at,
            &t,
            &require_path(out, &s.out_dir, "out")?,
        ),
        Command::Lineout {
            field,
            column,
            y,
            x_range,
            out,
        } => cmd_lineout(&s, &field, column, y, x_range.as_deref(), &out),
    }
}

fn cmd_sample(s: &Settings, n: usize, extend: Option<&Path>, candidates: Option<usize>, out: &Path) -> Result<()> {
    let bx = InputBox::initial_design();
    let (existing, mut seeds) = match extend {
        Some(p) => read_sample_table(p, bx.dim())?,
        None => (Vec::new(), Vec::new()),
    };
    // Without an explicit seed, an extension continues the recorded chain.
    let seed = match (s.seed_explicit, seeds.last()) {
        (false, Some(&last)) => derive_seed(last, seeds.len() as u64),
        _ => s.seed,
    };
    let candidates = candidates.unwrap_or(s.candidates);
    log::info!("sampling {n} points, {candidates} candidates each, seed {seed}");
    let points = best_candidate_extend(&existing, n, candidates, &bx, seed)?;
    seeds.push(seed);
    let tmp = out.with_file_name(format!(
        ".{}.tmp",
        out.file_name().map(|f| f.to_string_lossy()).unwrap_or_default()
    ));
    write_sample_table(&tmp, &bx, &points, &seeds)?;
    std::fs::rename(&tmp, out).with_context(|| format!("renaming into {}", out.display()))?;
    println!("{} points written to {}", points.len(), out.display());
    Ok(())
}

fn cmd_synth(s: &Settings, samples: &Path, out: &Path) -> Result<()> {
    let (points, _) = read_sample_table(samples, 3)?;
    let mut spec = SyntheticSpec::from_samples(&points)?;
    spec.grid = s.grid.clone();
    spec.seed = s.seed;
    spec.recipe.noise = s.synth_noise;
    let ens = generate_ensemble(&spec, out)?;
    let n: usize = ens.members.iter().map(|m| m.n_timesteps).sum();
    println!("{} members, {n} snapshots written to {}", ens.members.len(), out.display());
    Ok(())
}

fn cmd_preprocess(s: &Settings, raw: &Path, store: &Path) -> Result<()> {
    let ens = EnsembleManifest::read(raw)?;
    let out = preprocess_ensemble(raw, store, &s.grid, s.crop_x_min, &s.variables)?;
    ens.write(store)?;
    for (v, m) in &out {
        println!("{v}\tN={}\tD={}\tK={}", m.n_cols(), m.n_rows(), m.n_blocks());
    }
    Ok(())
}

fn open_store(s: &Settings, store: &Path) -> Result<BlockSnapshotMatrix> {
    let dir = store.join(s.variable().to_string());
    BlockSnapshotMatrix::open(&dir).with_context(|| format!("opening store {}", dir.display()))
}

fn cmd_cluster(s: &Settings, store: &Path, out: &Path) -> Result<()> {
    let x = open_store(s, store)?;
    let staged = StagedOutput::new(out)?;
    let k = match s.k {
        Some(k) => k,
        None => {
            let report = choose_k(&x, &s.stability)?;
            let mut t = Tsv::new(
                &[
                    format!("stability of k-means partitions, seed {}", s.stability.seed),
                    format!("chosen k = {}", report.chosen),
                ],
                &["k", "mean_ari"],
            );
            for (k, ari) in &report.table {
                t.row(&[k.to_string(), num(*ari)]);
            }
            t.write(&staged.tmp.join("stability.tsv"))?;
            report.chosen
        }
    };
    let proj = stability_projection(&s.stability, 0, x.n_rows());
    let model = ClusterModel::fit(&x, k, proj, s.stability.n_init, derive_seed(s.stability.seed, 2000))?;
    model.save(&staged.tmp.join("clusters.txt"))?;
    let mut t = Tsv::new(&[format!("k = {k}")], &["column", "sim_key", "timestep", "label"]);
    for (j, (d, l)) in x.descriptors().iter().zip(&model.labels).enumerate() {
        t.row(&[j.to_string(), d.sim_key.clone(), d.timestep.to_string(), l.to_string()]);
    }
    t.write(&staged.tmp.join("labels.tsv"))?;
    staged.commit()?;
    println!("k={k}\tsizes={:?}", model.sizes());
    Ok(())
}

fn cmd_fit(s: &Settings, store: &Path, clusters: Option<&Path>, out: &Path) -> Result<()> {
    let x = open_store(s, store)?;
    let grid = x.grid().clone();
    let descs = x.descriptors().to_vec();
    let bundle = match clusters {
        None => SurrogateBundle::fit_linear(&x, &descs, &grid, &s.policy, &s.gp)?,
        Some(dir) => {
            let model = ClusterModel::load(&dir.join("clusters.txt"))?;
            SurrogateBundle::fit_locally_linear(&x, &descs, &grid, &model, &s.policy, &s.gp)?
        }
    };
    let mut bundle = bundle.with_variable(s.variable());
    if store.join(ENSEMBLE_FILE).exists() {
        bundle = bundle.with_rule(EnsembleManifest::read(store)?.rule);
    }
    bundle.save(out)?;
    for (c, local) in bundle.clusters.iter().enumerate() {
        let sigma = local.basis.sigma();
        let n = local.models.len();
        println!(
            "cluster {c}\tcolumns={}\teffective_rank={}\tmodels={n}\tvariance_captured={:.4}%",
            local.columns.len(),
            local.basis.effective_rank(),
            cumulative_variance(sigma, n)?
        );
    }
    Ok(())
}

fn cmd_loo(bundle_dir: &Path, out: &Path) -> Result<()> {
    let bundle = SurrogateBundle::load(bundle_dir)?;
    let mut t = Tsv::new(
        &["leave-one-out predictions per weight model".into()],
        &[
            "cluster",
            "weight",
            "point",
            "actual",
            "predicted",
            "std",
            "slope",
            "intercept",
            "r2",
        ],
    );
    for (c, local) in bundle.clusters.iter().enumerate() {
        if local.columns.len() < 3 {
            bail!(stsurr::Error::TooFewPoints {
                needed: 3,
                got: local.columns.len()
            });
        }
        let reports: Vec<_> = local.models.par_iter().map(|m| m.loo()).collect();
        for (i, r) in reports.iter().enumerate() {
            for p in 0..r.actual.len() {
                t.row(&[
                    c.to_string(),
                    i.to_string(),
                    p.to_string(),
                    num(r.actual[p]),
                    num(r.predicted[p]),
                    num(r.std[p]),
                    num(r.slope),
                    num(r.intercept),
                    num(r.r2),
                ]);
            }
        }
    }
    t.write(out)
}

/// Parses `tlast`, `tlast-K` or a plain timestep into an offset from the end.
fn timestep_offset(spec: &str, t_last: usize) -> Result<usize> {
    let spec = spec.trim();
    if spec == "tlast" {
        return Ok(0);
    }
    if let Some(k) = spec.strip_prefix("tlast-") {
        return Ok(k.parse().with_context(|| format!("bad timestep `{spec}`"))?);
    }
    let t: usize = spec.parse().with_context(|| format!("bad timestep `{spec}`"))?;
    if t > t_last {
        bail!(stsurr::Error::OutOfDomain {
            what: "timestep",
            value: t as f64,
            lo: 0.0,
            hi: t_last as f64,
        });
    }
    Ok(t_last - t)
}

fn cmd_predict(s: &Settings, bundle_dir: &Path, at: &str, ts: &[String], out: &Path) -> Result<()> {
    let bundle = SurrogateBundle::load(bundle_dir)?;
    let v: Vec<f64> = at
        .split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad --at `{at}`")))
        .collect::<Result<_>>()?;
    if v.len() != 3 {
        bail!("--at needs h,v,r");
    }
    let inputs = SimInputs::new(v[0], v[1], v[2])?;
    let t_last = bundle.query_from_end(inputs, 0)?.t_last as usize;

    let staged = StagedOutput::new(out)?;
    let mut fields = SnapshotWriter::create(&staged.tmp.join("fields"), &bundle.grid, bundle.variable)?;
    let mut weights = Tsv::new(
        &[format!("inputs h={} v={} r={}", v[0], v[1], v[2])],
        &["t", "cluster", "weight", "mean", "std", "used"],
    );
    let mut lines = Tsv::new(
        &[format!("y = {}", s.lineout_y)],
        &["t", "x", "value"],
    );
    let mut edges = Tsv::new(
        &[format!("threshold fraction = {}", s.edge_fraction)],
        &["t", "edge_x"],
    );
    for spec in ts {
        let q = bundle.query_from_end(inputs, timestep_offset(spec, t_last)?)?;
        let t = q.t as usize;
        let p = bundle.predict_field(&q, s.n_weights)?;
        for w in &p.warnings {
            log::warn!("t={t}: {w}");
        }
        log::info!("t={t}: cluster {}, {} weights", p.cluster, p.n_used);
        for (i, (m, sd)) in p.weights.iter().enumerate() {
            weights.row(&[
                t.to_string(),
                p.cluster.to_string(),
                i.to_string(),
                num(*m),
                num(*sd),
                u8::from(i < p.n_used).to_string(),
            ]);
        }
        let line = lineout(&p.field, &bundle.grid, s.lineout_y, s.lineout_x.0, s.lineout_x.1)?;
        for (x, val) in &line {
            lines.row(&[t.to_string(), num(*x), num(*val)]);
        }
        let edge = locate_plate_edge(&line, s.edge_fraction).map_or("none".to_string(), num);
        edges.row(&[t.to_string(), edge.clone()]);
        println!("t={t}\tcluster={}\tn_weights={}\tplate_edge={edge}", p.cluster, p.n_used);
        let desc = ColumnDescriptor {
            sim_key: "query".into(),
            timestep: t,
            inputs,
            n_timesteps: t_last + 1,
        };
        fields.push_column(desc, &p.field)?;
    }
    fields.finish()?;
    weights.write(&staged.tmp.join("weights.tsv"))?;
    lines.write(&staged.tmp.join("lineout.tsv"))?;
    edges.write(&staged.tmp.join("edge.tsv"))?;
    staged.commit()
}

fn cmd_lineout(
    s: &Settings,
    field: &Path,
    column: Option<usize>,
    y: Option<f64>,
    x_range: Option<&str>,
    out: &Path,
) -> Result<()> {
    let m = BlockSnapshotMatrix::open(field)?;
    let y = y.unwrap_or(s.lineout_y);
    let (x0, x1) = match x_range {
        Some(r) => {
            let v: Vec<f64> = r
                .split(',')
                .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad --x-range `{r}`")))
                .collect::<Result<_>>()?;
            if v.len() != 2 {
                bail!("--x-range needs x_min,x_max");
            }
            (v[0], v[1])
        }
        None => s.lineout_x,
    };
    let cols: Vec<usize> = match column {
        Some(c) => vec![c],
        None => (0..m.n_cols()).collect(),
    };
    let mut comments = vec![format!("y = {y}")];
    let mut rows = Vec::new();
    for &c in &cols {
        let values = m.read_column(c)?;
        let line = lineout(&values, m.grid(), y, x0, x1)?;
        let edge = locate_plate_edge(&line, s.edge_fraction).map_or("none".to_string(), num);
        comments.push(format!("edge column {c} = {edge}"));
        for (x, v) in line {
            rows.push([c.to_string(), num(x), num(v)]);
        }
    }
    let mut t = Tsv::new(&comments, &["column", "x", "value"]);
    for r in rows {
        t.row(&r);
    }
    t.write(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestep_specs() {
        assert_eq!(timestep_offset("tlast", 10).unwrap(), 0);
        assert_eq!(timestep_offset("tlast-2", 10).unwrap(), 2);
        assert_eq!(timestep_offset("7", 10).unwrap(), 3);
        assert!(timestep_offset("11", 10).is_err());
        assert!(timestep_offset("later", 10).is_err());
    }

    #[test]
    fn flags_parse() {
        Cli::try_parse_from(["stsurr", "predict", "--at", "10,0.8,0.2", "--t", "tlast", "--out", "o"]).unwrap();
        Cli::try_parse_from(["stsurr", "--seed", "3", "lineout", "--field", "f", "--out", "o", "--y", "6"]).unwrap();
    }
}
