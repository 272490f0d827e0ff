//! Raw per-simulation, per-timestep field dumps and the ingestion table format.
//!
//! A raw dump directory looks like
//!
//! ```text
//! raw/
//!   ensemble.txt                 # members, inputs, outcomes, timestep rule
//!   <sim_key>/step_00000.bin     # one table per timestep, or several
//!   <sim_key>/step_00001.part00.tsv
//!   <sim_key>/step_00001.part01.tsv
//! ```
//!
//! Each table has the columns `x y mass x_momentum y_momentum`. Text tables
//! (`.tsv`) are whitespace separated with `#` comments; binary tables
//! (`.bin`) are an 8-byte magic, a little-endian `u64` row count, then rows of
//! five little-endian `f64`. Sub-domain parts of one timestep are concatenated
//! in file-name order.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::meta::{Outcome, SimInputs, SimulationMeta, TimestepRule, Variable};

pub const TABLE_MAGIC: &[u8; 8] = b"STSRAW01";
pub const ENSEMBLE_FILE: &str = "ensemble.txt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPoint {
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

/// One variable of one timestep of one simulation, at the simulation's own
/// (unaligned) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RawField {
    pub points: Vec<RawPoint>,
    pub variable: Variable,
    pub sim_key: String,
    pub timestep: usize,
}

impl RawField {
    /// Checks that coordinates are finite and `(x, y)` pairs are unique.
    pub fn validate(&self) -> Result<()> {
        let mut coords: Vec<(u64, u64)> = Vec::with_capacity(self.points.len());
        for p in &self.points {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::NonFiniteInput);
            }
            coords.push(((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits()));
        }
        coords.sort_unstable();
        if coords.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::format(
                "raw field",
                format!("{}/{} has duplicate coordinates", self.sim_key, self.timestep),
            ));
        }
        Ok(())
    }
}

/// All variables of one timestep: rows of `[x, y, mass, x_momentum, y_momentum]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub sim_key: String,
    pub timestep: usize,
    pub rows: Vec<[f64; 5]>,
}

impl RawTable {
    pub fn field(&self, variable: Variable) -> RawField {
        let c = variable.table_column();
        RawField {
            points: self
                .rows
                .iter()
                .map(|r| RawPoint {
                    x: r[0],
                    y: r[1],
                    value: r[c],
                })
                .collect(),
            variable,
            sim_key: self.sim_key.clone(),
            timestep: self.timestep,
        }
    }
}

pub fn write_table_binary(path: &Path, rows: &[[f64; 5]]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut buf = Vec::with_capacity(16 + rows.len() * 40);
    buf.extend_from_slice(TABLE_MAGIC);
    buf.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    for row in rows {
        for v in row {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_table_text(path: &Path, rows: &[[f64; 5]]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "# x\ty\tmass\tx_momentum\ty_momentum").map_err(io)?;
    for r in rows {
        writeln!(w, "{:?}\t{:?}\t{:?}\t{:?}\t{:?}", r[0], r[1], r[2], r[3], r[4]).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a text or binary table, chosen by file extension.
pub fn read_table(path: &Path) -> Result<Vec<[f64; 5]>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => read_table_binary(path),
        Some("tsv") | Some("txt") => read_table_text(path),
        _ => Err(Error::format(
            "raw table",
            format!("{}: unknown extension", path.display()),
        )),
    }
}

fn read_table_binary(path: &Path) -> Result<Vec<[f64; 5]>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |d: &str| Error::format("raw table", format!("{}: {d}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != TABLE_MAGIC {
        return Err(bad("bad magic"));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + n * 40 {
        return Err(bad("truncated"));
    }
    Ok(bytes[16..]
        .chunks_exact(40)
        .map(|row| {
            let mut out = [0.0; 5];
            for (o, c) in out.iter_mut().zip(row.chunks_exact(8)) {
                *o = f64::from_le_bytes(c.try_into().unwrap());
            }
            out
        })
        .collect())
}

fn read_table_text(path: &Path) -> Result<Vec<[f64; 5]>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = [0.0; 5];
        let mut n = 0;
        for tok in line.split_whitespace() {
            if n == 5 {
                n += 1;
                break;
            }
            row[n] = tok.parse().map_err(|_| {
                Error::format(
                    "raw table",
                    format!("{}:{}: bad number `{tok}`", path.display(), lineno + 1),
                )
            })?;
            n += 1;
        }
        if n != 5 {
            return Err(Error::format(
                "raw table",
                format!("{}:{}: expected 5 columns", path.display(), lineno + 1),
            ));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn step_file_name(timestep: usize, part: Option<usize>, binary: bool) -> String {
    let ext = if binary { "bin" } else { "tsv" };
    match part {
        Some(p) => format!("step_{timestep:05}.part{p:02}.{ext}"),
        None => format!("step_{timestep:05}.{ext}"),
    }
}

/// Table files of one simulation, grouped by timestep and sorted by name.
pub fn scan_simulation(dir: &Path) -> Result<BTreeMap<usize, Vec<PathBuf>>> {
    let mut steps: BTreeMap<usize, Vec<PathBuf>> = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(rest) = name.strip_prefix("step_") else {
            continue;
        };
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        if let Ok(t) = digits.parse::<usize>() {
            steps.entry(t).or_default().push(path);
        }
    }
    for files in steps.values_mut() {
        files.sort();
    }
    Ok(steps)
}

/// Loads and concatenates all parts of one timestep.
pub fn load_step(files: &[PathBuf], sim_key: &str, timestep: usize) -> Result<RawTable> {
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_table(f)?);
    }
    Ok(RawTable {
        sim_key: sim_key.to_string(),
        timestep,
        rows,
    })
}

/// The members of a raw dump plus the timestep rule used to produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleManifest {
    pub rule: TimestepRule,
    pub members: Vec<SimulationMeta>,
}

impl EnsembleManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut m = Manifest::new();
        m.push("timestep_rule.divisor", format!("{:?}", self.rule.divisor));
        m.push("timestep_rule.offset", self.rule.offset);
        m.push("members", self.members.len());
        for (i, s) in self.members.iter().enumerate() {
            m.push(
                format!("member.{i:04}"),
                format!(
                    "{} {:?} {:?} {:?} {} {}",
                    s.key,
                    s.inputs.radius,
                    s.inputs.he_length,
                    s.inputs.tip_velocity,
                    s.n_timesteps,
                    s.outcome
                ),
            );
        }
        m.write(&dir.join(ENSEMBLE_FILE))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let m = Manifest::read(&dir.join(ENSEMBLE_FILE))?;
        let rule = TimestepRule {
            divisor: m.parse("timestep_rule.divisor")?,
            offset: m.parse("timestep_rule.offset")?,
        };
        let count: usize = m.parse("members")?;
        let mut members = Vec::with_capacity(count);
        for (_, line) in m.with_prefix("member.") {
            let t: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::format("ensemble member", line.to_string());
            if t.len() != 6 {
                return Err(bad());
            }
            let inputs = SimInputs::new(
                t[2].parse().map_err(|_| bad())?,
                t[3].parse().map_err(|_| bad())?,
                t[1].parse().map_err(|_| bad())?,
            )?;
            members.push(SimulationMeta {
                key: t[0].to_string(),
                inputs,
                n_timesteps: t[4].parse().map_err(|_| bad())?,
                outcome: t[5].parse::<Outcome>()?,
            });
        }
        if members.len() != count {
            return Err(Error::format(
                "ensemble",
                format!("declares {count} members, lists {}", members.len()),
            ));
        }
        Ok(Self { rule, members })
    }
}
