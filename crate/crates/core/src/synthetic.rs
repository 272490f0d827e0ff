//! Analytic jet/plate ensembles with known ground truth.
//!
//! Every field is a closed-form function of position, the member inputs
//! `(h, v, r)` and the timestep. A dense slab ("plate", value about 8) sits
//! near `x = -12` with low-density products (about 1) to its right and
//! vacuum to its left. A thin strip ("jet") enters from the right edge along
//! the bottom, and the plate bows to the left around the axis. Once the
//! progress parameter `p = v * tau * (r / r_ref) / h` passes the break level
//! a hole opens at the plate bottom and the jet passes through it.
//!
//! Edges are smoothed with `tanh` profiles so the fields vary smoothly with
//! the inputs.

use std::path::Path;

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{even_split, CommonGrid};
use crate::meta::{ColumnDescriptor, Outcome, SimInputs, SimulationMeta, TimestepRule, Variable};
use crate::rng::stream;
use crate::store::blocks::StagedDir;
use crate::store::raw::{step_file_name, write_table_binary, write_table_text};
use crate::store::{preprocess_field, DenseBlocks, EnsembleManifest, RawTable};

/// Shape parameters of the analytic fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub plate_value: f64,
    pub products_value: f64,
    pub jet_value: f64,
    /// Initial plate extent in aligned x.
    pub plate_left: f64,
    pub plate_right: f64,
    /// Leftward plate displacement per unit progress, on the axis.
    pub push: f64,
    /// Vertical length scale of the bowing.
    pub bend_scale: f64,
    /// Jet half-width as a multiple of the radius input.
    pub jet_width_factor: f64,
    pub radius_ref: f64,
    pub break_level: f64,
    pub almost_level: f64,
    /// Hole radius growth per unit progress past the break level.
    pub hole_rate: f64,
    /// Width of the smoothed edges, in cm.
    pub edge_width: f64,
    /// Standard deviation of additive noise on raw tables (0 = exact).
    pub noise: f64,
}

impl Default for Recipe {
    fn default() -> Self {
        Self {
            plate_value: 8.0,
            products_value: 1.0,
            jet_value: 8.0,
            plate_left: -13.0,
            plate_right: -11.0,
            push: 1.5,
            bend_scale: 6.0,
            jet_width_factor: 4.0,
            radius_ref: 0.1875,
            break_level: 3.0,
            almost_level: 2.6,
            hole_rate: 2.0,
            edge_width: 1.0,
            noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub grid: CommonGrid,
    pub members: Vec<(String, SimInputs)>,
    pub rule: TimestepRule,
    pub recipe: Recipe,
    pub seed: u64,
    /// Raw point spacing relative to the grid spacing.
    pub raw_spacing: f64,
}

/// Scaled-down timestep rule giving roughly 6 to 11 steps per member over
/// the default input box.
pub const SYNTHETIC_RULE: TimestepRule = TimestepRule {
    divisor: 5.0,
    offset: 5,
};

fn smooth_step(z: f64, w: f64) -> f64 {
    0.5 * (1.0 + (z / w).tanh())
}

fn softplus(z: f64, w: f64) -> f64 {
    let a = z / w;
    if a > 30.0 {
        z
    } else {
        w * a.exp().ln_1p()
    }
}

/// Field values of all three variables at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointValues {
    pub mass: f64,
    pub x_momentum: f64,
    pub y_momentum: f64,
}

impl PointValues {
    pub fn get(&self, v: Variable) -> f64 {
        match v {
            Variable::Mass => self.mass,
            Variable::XMomentum => self.x_momentum,
            Variable::YMomentum => self.y_momentum,
        }
    }
}

impl SyntheticSpec {
    /// The 128 x 64 grid over `[-32, 0] x [0, 16]`, in 4 row blocks.
    pub fn default_grid() -> CommonGrid {
        CommonGrid::new(-32.0, 0.0, 0.0, 16.0, 0.25, 4).expect("valid default grid")
    }

    pub fn new(members: Vec<(String, SimInputs)>) -> Self {
        Self {
            grid: Self::default_grid(),
            members,
            rule: SYNTHETIC_RULE,
            recipe: Recipe::default(),
            seed: 0,
            raw_spacing: 0.97,
        }
    }

    /// Members from sample points `(h, v, r)`, keyed `s000`, `s001`, ...
    pub fn from_samples(points: &[Vec<f64>]) -> Result<Self> {
        let members = points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p.len() != 3 {
                    return Err(Error::DimensionMismatch {
                        expected: 3,
                        actual: p.len(),
                    });
                }
                Ok((crate::sampling::sample_key(i), SimInputs::new(p[0], p[1], p[2])?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(members))
    }

    pub fn validate(&self) -> Result<()> {
        for (key, inputs) in &self.members {
            inputs.validate()?;
            if self.n_timesteps(inputs) < 2 {
                return Err(Error::InvalidParameter(format!("member {key} has fewer than 2 timesteps")));
            }
        }
        let r = &self.recipe;
        if !(r.edge_width > 0.0 && r.bend_scale > 0.0 && r.radius_ref > 0.0 && r.noise >= 0.0) {
            return Err(Error::InvalidParameter("recipe widths must be positive".into()));
        }
        if !(self.raw_spacing > 0.0) {
            return Err(Error::InvalidParameter("raw spacing must be positive".into()));
        }
        Ok(())
    }

    pub fn n_timesteps(&self, inputs: &SimInputs) -> usize {
        self.rule.n_timesteps(inputs.he_length, inputs.tip_velocity)
    }

    /// Dimensionless progress at timestep `t` (may be fractional).
    pub fn progress(&self, inputs: &SimInputs, t: f64) -> f64 {
        let tau = t * self.rule.divisor;
        inputs.tip_velocity * tau * (inputs.radius / self.recipe.radius_ref) / inputs.he_length
    }

    /// Outcome label from the progress at the last timestep.
    pub fn outcome(&self, inputs: &SimInputs) -> Outcome {
        let t_last = self.n_timesteps(inputs) - 1;
        let p = self.progress(inputs, t_last as f64);
        if p >= self.recipe.break_level {
            Outcome::Break
        } else if p >= self.recipe.almost_level {
            Outcome::AlmostBreak
        } else {
            Outcome::NoBreak
        }
    }

    pub fn metas(&self) -> Vec<SimulationMeta> {
        self.members
            .iter()
            .map(|(key, inputs)| SimulationMeta {
                key: key.clone(),
                inputs: *inputs,
                n_timesteps: self.n_timesteps(inputs),
                outcome: self.outcome(inputs),
            })
            .collect()
    }

    pub fn descriptors(&self) -> Vec<ColumnDescriptor> {
        self.metas()
            .iter()
            .flat_map(|m| (0..m.n_timesteps).map(move |t| ColumnDescriptor::from_meta(m, t)))
            .collect()
    }

    /// Exact field values at aligned position `(x, y)`.
    pub fn values(&self, inputs: &SimInputs, t: f64, x: f64, y: f64) -> PointValues {
        let rc = &self.recipe;
        let w = rc.edge_width;
        let p = self.progress(inputs, t);
        let dp_dtau = inputs.tip_velocity * (inputs.radius / rc.radius_ref) / inputs.he_length;

        let bow = (-(y / rc.bend_scale).powi(2)).exp();
        let shift = rc.push * p * bow;
        let left = rc.plate_left - shift;
        let right = rc.plate_right - shift;
        let slab = smooth_step(x - left, w) * smooth_step(right - x, w);
        let hole_radius = rc.hole_rate * softplus(p - rc.break_level, 0.1);
        let hole = smooth_step(hole_radius - y, w);
        let plate = slab * (1.0 - hole);

        // The jet stops at the plate until the hole opens, then passes.
        let open = smooth_step(p - rc.break_level, 0.2);
        let free_tip = rc.plate_right * p;
        let stop = rc.plate_right - rc.push * p - 0.25;
        let blocked_tip = stop + softplus(free_tip - stop, 0.25);
        let tip = open * free_tip + (1.0 - open) * blocked_tip;
        let half_width = rc.jet_width_factor * inputs.radius;
        let jet = smooth_step(x - tip, w) * smooth_step(half_width - y, w);

        let products = smooth_step(x - right, w) * (-0.3 * p).exp();
        let mass = rc.plate_value * plate
            + (1.0 - plate) * (rc.jet_value * jet + rc.products_value * products * (1.0 - jet));

        let plate_speed = rc.push * bow * dp_dtau;
        let x_momentum = -(rc.plate_value * plate * plate_speed
            + (1.0 - plate) * rc.jet_value * jet * inputs.tip_velocity);
        let y_momentum =
            rc.plate_value * plate * plate_speed * 2.0 * p * (y / rc.bend_scale) * bow;
        PointValues {
            mass,
            x_momentum,
            y_momentum,
        }
    }

    /// The exact field on the grid cell centers, in natural order.
    pub fn truth_field(&self, inputs: &SimInputs, t: f64, variable: Variable) -> Vec<f64> {
        (0..self.grid.n_points())
            .map(|k| {
                let (x, y) = self.grid.cell_center(k);
                self.values(inputs, t, x, y).get(variable)
            })
            .collect()
    }

    /// Raw dump of member `m` at timestep `t`, on the member's own slightly
    /// coarser grid with an arbitrary x offset.
    pub fn raw_table(&self, m: usize, t: usize) -> RawTable {
        let (key, inputs) = &self.members[m];
        let ds = self.grid.delta * self.raw_spacing;
        let nx = ((self.grid.x_max - self.grid.x_min + 2.0) / ds).ceil() as usize;
        let ny = ((self.grid.y_max - self.grid.y_min) / ds).ceil() as usize + 1;
        let x_right = 10.0 + 1.37 * m as f64;
        let y0 = self.grid.y_min + 0.1 * ds;
        let mut rng = stream(self.seed, (m as u64) << 20 | t as u64);
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let mut rows = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let y = y0 + j as f64 * ds;
            for i in 0..nx {
                let x = x_right - i as f64 * ds;
                let v = self.values(inputs, t as f64, x - x_right, y);
                let mut row = [x, y, v.mass, v.x_momentum, v.y_momentum];
                if self.recipe.noise > 0.0 {
                    for c in row.iter_mut().skip(2) {
                        *c += self.recipe.noise * noise.sample(&mut rng);
                    }
                }
                rows.push(row);
            }
        }
        RawTable {
            sim_key: key.clone(),
            timestep: t,
            rows,
        }
    }

    /// Remapped snapshots of every member and timestep, built in memory.
    ///
    /// Returns one matrix per requested variable, blocked like the grid, and
    /// the column descriptors in member-then-timestep order.
    pub fn assemble(
        &self,
        variables: &[Variable],
        crop_x_min: f64,
    ) -> Result<(Vec<DenseBlocks>, Vec<ColumnDescriptor>)> {
        self.validate()?;
        let descriptors = self.descriptors();
        let index: Vec<(usize, usize)> = self
            .metas()
            .iter()
            .enumerate()
            .flat_map(|(m, meta)| (0..meta.n_timesteps).map(move |t| (m, t)))
            .collect();
        let columns: Vec<Vec<Vec<f64>>> = index
            .par_iter()
            .map(|&(m, t)| {
                let table = self.raw_table(m, t);
                variables
                    .iter()
                    .map(|&v| preprocess_field(&table.field(v), &self.grid, crop_x_min))
                    .collect()
            })
            .collect::<Result<_>>()?;
        let counts: Vec<usize> = (0..self.grid.n_blocks())
            .map(|k| self.grid.block_rows(k).len())
            .collect();
        let mats = (0..variables.len())
            .map(|vi| {
                let m = DMatrix::from_fn(self.grid.n_points(), columns.len(), |r, c| columns[c][vi][r]);
                DenseBlocks::split(&m, &counts)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((mats, descriptors))
    }
}

/// Writes a raw dump directory: `ensemble.txt` plus one subdirectory per
/// member with its timestep tables. Members use varying part counts and
/// both table encodings.
pub fn generate_ensemble(spec: &SyntheticSpec, dir: &Path) -> Result<EnsembleManifest> {
    spec.validate()?;
    let staged = StagedDir::new(dir)?;
    let metas = spec.metas();
    metas.par_iter().enumerate().try_for_each(|(m, meta)| {
        let sub = staged.tmp.join(&meta.key);
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let parts = 1 + m % 3;
        let binary = m % 4 != 3;
        for t in 0..meta.n_timesteps {
            let table = spec.raw_table(m, t);
            let ranges = even_split(table.rows.len(), parts)?;
            for (pi, r) in ranges.into_iter().enumerate() {
                let part = (parts > 1).then_some(pi);
                let path = sub.join(step_file_name(t, part, binary));
                if binary {
                    write_table_binary(&path, &table.rows[r])?;
                } else {
                    write_table_text(&path, &table.rows[r])?;
                }
            }
        }
        Ok::<_, Error>(())
    })?;
    let manifest = EnsembleManifest {
        rule: spec.rule,
        members: metas,
    };
    manifest.write(&staged.tmp)?;
    staged.commit()?;
    Ok(manifest)
}
