//! Simulation metadata: inputs, outcome labels, output variables and
//! snapshot column descriptors.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The three simulation inputs. Units: cm, cm/µs, cm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimInputs {
    pub he_length: f64,
    pub tip_velocity: f64,
    pub radius: f64,
}

impl SimInputs {
    pub fn new(he_length: f64, tip_velocity: f64, radius: f64) -> Result<Self> {
        let inputs = Self {
            he_length,
            tip_velocity,
            radius,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("he_length", self.he_length),
            ("tip_velocity", self.tip_velocity),
            ("radius", self.radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Number of output timesteps as a function of HE length and tip velocity:
/// `floor(h / (v * divisor)) + offset`.
///
/// The production rule has `divisor = 1` and `offset = 23`; the synthetic
/// generator uses a scaled-down analogue to keep ensembles small.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimestepRule {
    pub divisor: f64,
    pub offset: usize,
}

impl Default for TimestepRule {
    fn default() -> Self {
        Self {
            divisor: 1.0,
            offset: 23,
        }
    }
}

impl TimestepRule {
    pub fn n_timesteps(&self, he_length: f64, tip_velocity: f64) -> usize {
        (he_length / (tip_velocity * self.divisor)).floor() as usize + self.offset
    }

    pub fn t_last(&self, he_length: f64, tip_velocity: f64) -> usize {
        self.n_timesteps(he_length, tip_velocity).saturating_sub(1)
    }
}

/// `floor(h / v) + 23`.
pub fn n_timesteps(he_length: f64, tip_velocity: f64) -> usize {
    TimestepRule::default().n_timesteps(he_length, tip_velocity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Break,
    AlmostBreak,
    NoBreak,
    Unknown,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Break => "break",
            Outcome::AlmostBreak => "almost_break",
            Outcome::NoBreak => "no_break",
            Outcome::Unknown => "unknown",
        })
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "break" => Ok(Outcome::Break),
            "almost_break" => Ok(Outcome::AlmostBreak),
            "no_break" => Ok(Outcome::NoBreak),
            "unknown" => Ok(Outcome::Unknown),
            other => Err(Error::format("outcome", other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    Mass,
    XMomentum,
    YMomentum,
}

impl Variable {
    pub const ALL: [Variable; 3] = [Variable::Mass, Variable::XMomentum, Variable::YMomentum];

    /// Column of this variable in an ingestion table (after x and y).
    pub fn table_column(self) -> usize {
        match self {
            Variable::Mass => 2,
            Variable::XMomentum => 3,
            Variable::YMomentum => 4,
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variable::Mass => "mass",
            Variable::XMomentum => "x_momentum",
            Variable::YMomentum => "y_momentum",
        })
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mass" => Ok(Variable::Mass),
            "x_momentum" | "xmom" => Ok(Variable::XMomentum),
            "y_momentum" | "ymom" => Ok(Variable::YMomentum),
            other => Err(Error::format("variable", other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationMeta {
    pub key: String,
    pub inputs: SimInputs,
    pub n_timesteps: usize,
    pub outcome: Outcome,
}

/// Identifies one column of the snapshot matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDescriptor {
    pub sim_key: String,
    pub timestep: usize,
    pub inputs: SimInputs,
    pub n_timesteps: usize,
}

impl ColumnDescriptor {
    pub fn from_meta(meta: &SimulationMeta, timestep: usize) -> Self {
        Self {
            sim_key: meta.key.clone(),
            timestep,
            inputs: meta.inputs,
            n_timesteps: meta.n_timesteps,
        }
    }

    pub fn t_last(&self) -> usize {
        self.n_timesteps.saturating_sub(1)
    }

    /// Regression inputs `(h, v, r, t)`.
    pub fn features(&self) -> [f64; 4] {
        [
            self.inputs.he_length,
            self.inputs.tip_velocity,
            self.inputs.radius,
            self.timestep as f64,
        ]
    }

    pub fn id(&self) -> String {
        format!("{}/{}", self.sim_key, self.timestep)
    }

    /// `key timestep h v r n_timesteps`, parseable by [`ColumnDescriptor::parse`].
    pub fn render(&self) -> String {
        format!(
            "{} {} {:?} {:?} {:?} {}",
            self.sim_key,
            self.timestep,
            self.inputs.he_length,
            self.inputs.tip_velocity,
            self.inputs.radius,
            self.n_timesteps
        )
    }

    pub fn parse(s: &str) -> Result<Self> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        if toks.len() != 6 {
            return Err(Error::format("column descriptor", s));
        }
        let bad = || Error::format("column descriptor", s.to_string());
        Ok(Self {
            sim_key: toks[0].to_string(),
            timestep: toks[1].parse().map_err(|_| bad())?,
            inputs: SimInputs {
                he_length: toks[2].parse().map_err(|_| bad())?,
                tip_velocity: toks[3].parse().map_err(|_| bad())?,
                radius: toks[4].parse().map_err(|_| bad())?,
            },
            n_timesteps: toks[5].parse().map_err(|_| bad())?,
        })
    }
}

/// A prediction request: simulation inputs, timestep, and the last timestep of
/// the (hypothetical) simulation at those inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryPoint {
    pub inputs: SimInputs,
    pub t: f64,
    pub t_last: f64,
}

impl QueryPoint {
    pub fn features(&self) -> [f64; 4] {
        [
            self.inputs.he_length,
            self.inputs.tip_velocity,
            self.inputs.radius,
            self.t,
        ]
    }
}

impl From<&ColumnDescriptor> for QueryPoint {
    fn from(d: &ColumnDescriptor) -> Self {
        Self {
            inputs: d.inputs,
            t: d.timestep as f64,
            t_last: d.t_last() as f64,
        }
    }
}
