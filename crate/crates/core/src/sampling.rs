//! Progressive best-candidate sampling of the simulation input box.
//!
//! Each new point is the best of `c` uniform candidates: the one whose
//! minimum distance to every point accepted so far is largest. Distances are
//! measured after scaling each axis to `[0, 1]`. Accepted points are never
//! moved, so a design can be extended later without disturbing it.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_CANDIDATES: usize = 32;
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

/// Excludes points with `a * p[i] + b * p[j] > c` (raw units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub i: usize,
    pub j: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl HalfPlane {
    pub fn excludes(&self, p: &[f64]) -> bool {
        self.a * p[self.i] + self.b * p[self.j] > self.c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    pub axes: Vec<Axis>,
    pub exclusions: Vec<HalfPlane>,
}

impl InputBox {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidDimension("input box has no axes".into()));
        }
        for a in &axes {
            if !(a.lo < a.hi && a.lo.is_finite() && a.hi.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "axis {} has empty range [{}, {}]",
                    a.name, a.lo, a.hi
                )));
            }
        }
        Ok(Self {
            axes,
            exclusions: Vec::new(),
        })
    }

    /// Unit hypercube of dimension `dim`.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(
            (0..dim)
                .map(|i| Axis {
                    name: format!("x{i}"),
                    lo: 0.0,
                    hi: 1.0,
                })
                .collect(),
        )
    }

    /// HE length [5, 20] cm, tip velocity [0.6, 0.95] cm/µs, radius
    /// [0.125, 0.25] cm.
    pub fn initial_design() -> Self {
        let axis = |name: &str, lo, hi| Axis {
            name: name.into(),
            lo,
            hi,
        };
        Self::new(vec![
            axis("he_length", 5.0, 20.0),
            axis("tip_velocity", 0.6, 0.95),
            axis("radius", 0.125, 0.25),
        ])
        .expect("valid constant box")
    }

    pub fn with_exclusion(mut self, h: HalfPlane) -> Result<Self> {
        if h.i >= self.dim() || h.j >= self.dim() {
            return Err(Error::InvalidDimension(format!(
                "exclusion refers to axis {} or {} of a {}-d box",
                h.i,
                h.j,
                self.dim()
            )));
        }
        self.exclusions.push(h);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .zip(&self.axes)
                .all(|(&v, a)| v >= a.lo && v <= a.hi)
            && !self.exclusions.iter().any(|h| h.excludes(p))
    }

    fn normalized_dist2(&self, p: &[f64], q: &[f64]) -> f64 {
        p.iter()
            .zip(q)
            .zip(&self.axes)
            .map(|((a, b), ax)| {
                let d = (a - b) / (ax.hi - ax.lo);
                d * d
            })
            .sum()
    }

    /// Uniform draw, rejecting excluded points.
    fn draw<R: Rng>(&self, rng: &mut R) -> Result<Vec<f64>> {
        for _ in 0..MAX_REJECTIONS {
            let p: Vec<f64> = self
                .axes
                .iter()
                .map(|a| a.lo + (a.hi - a.lo) * rng.random::<f64>())
                .collect();
            if !self.exclusions.iter().any(|h| h.excludes(&p)) {
                return Ok(p);
            }
        }
        Err(Error::ExclusionTooTight(MAX_REJECTIONS))
    }
}

/// Index of the candidate farthest (in normalized distance) from `chosen`;
/// the first candidate wins ties, and when `chosen` is empty.
pub fn pick_best(candidates: &[Vec<f64>], chosen: &[Vec<f64>], bx: &InputBox) -> usize {
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let d = chosen
            .iter()
            .map(|p| bx.normalized_dist2(c, p))
            .fold(f64::INFINITY, f64::min);
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Returns `existing` followed by `m_new` best-candidate points.
pub fn best_candidate_extend(
    existing: &[Vec<f64>],
    m_new: usize,
    candidates: usize,
    bx: &InputBox,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if m_new == 0 || candidates == 0 {
        return Err(Error::InvalidParameter(
            "need at least one new point and one candidate".into(),
        ));
    }
    if let Some(p) = existing.iter().find(|p| !bx.contains(p)) {
        return Err(Error::InvalidParameter(format!(
            "existing point {p:?} lies outside the input box"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = existing.to_vec();
    for _ in 0..m_new {
        let cands = (0..candidates)
            .map(|_| bx.draw(&mut rng))
            .collect::<Result<Vec<_>>>()?;
        let best = pick_best(&cands, &points, bx);
        points.push(cands.into_iter().nth(best).unwrap());
    }
    Ok(points)
}

/// `n` independent uniform points (rejection-sampled against exclusions).
pub fn uniform_points(n: usize, bx: &InputBox, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| bx.draw(&mut rng)).collect()
}

/// Smallest normalized pairwise distance.
pub fn min_pairwise_distance(points: &[Vec<f64>], bx: &InputBox) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(bx.normalized_dist2(&points[i], &points[j]));
        }
    }
    Ok(best.sqrt())
}

pub fn sample_key(i: usize) -> String {
    format!("s{i:03}")
}

/// Writes `key <axis values...>` rows with the seed recorded in the header.
pub fn write_sample_table(path: &Path, bx: &InputBox, points: &[Vec<f64>], seeds: &[u64]) -> Result<()> {
    let mut out = Vec::new();
    let seeds: Vec<String> = seeds.iter().map(u64::to_string).collect();
    writeln!(out, "# seeds = {}", seeds.join(" ")).unwrap();
    let names: Vec<&str> = bx.axes.iter().map(|a| a.name.as_str()).collect();
    writeln!(out, "# key\t{}", names.join("\t")).unwrap();
    for (i, p) in points.iter().enumerate() {
        let vals: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}\t{}", sample_key(i), vals.join("\t")).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a sample table; returns the points and the seeds recorded so far.
pub fn read_sample_table(path: &Path, dim: usize) -> Result<(Vec<Vec<f64>>, Vec<u64>)> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    let mut seeds = Vec::new();
    for line in content.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("# seeds =") {
            seeds = rest
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| Error::format("sample table", line)))
                .collect::<Result<_>>()?;
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals = line
            .split_whitespace()
            .skip(1)
            .map(|t| t.parse::<f64>().map_err(|_| Error::format("sample table", line)))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: vals.len(),
            });
        }
        points.push(vals);
    }
    Ok((points, seeds))
}
