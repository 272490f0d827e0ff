use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: String, detail: String },

    #[error("no points left in field {sim_key}/{timestep} after cropping")]
    EmptyField { sim_key: String, timestep: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("duplicate snapshot column {0}")]
    DuplicateColumn(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("exclusion predicates rejected {0} consecutive candidate draws")]
    ExclusionTooTight(usize),

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("non-finite value in input")]
    NonFiniteInput,

    #[error("all singular values are zero")]
    AllZeroSpectrum,

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("k = {k} exceeds number of points {n}")]
    KExceedsN { k: usize, n: usize },

    #[error("cluster model has no training snapshots")]
    EmptyModel,

    #[error("kernel matrix factorization failed even with jitter {jitter:e}")]
    FactorizationFailure { jitter: f64 },

    #[error("cluster {cluster} has {size} snapshots, need at least {min}")]
    ClusterTooSmall {
        cluster: usize,
        size: usize,
        min: usize,
    },

    #[error("{what} = {value} outside domain [{lo}, {hi}]")]
    OutOfDomain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            what: what.into(),
            detail: detail.into(),
        }
    }

    /// Short stable identifier, used for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "IoError",
            Error::Format { .. } => "FormatError",
            Error::EmptyField { .. } => "EmptyField",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::DuplicateColumn(_) => "DuplicateColumn",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::ExclusionTooTight(_) => "ExclusionTooTight",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::NonFiniteInput => "NonFiniteInput",
            Error::AllZeroSpectrum => "AllZeroSpectrum",
            Error::InvalidDimension(_) => "InvalidDimension",
            Error::KExceedsN { .. } => "KExceedsN",
            Error::EmptyModel => "EmptyModel",
            Error::FactorizationFailure { .. } => "FactorizationFailure",
            Error::ClusterTooSmall { .. } => "ClusterTooSmall",
            Error::OutOfDomain { .. } => "OutOfDomain",
            Error::InvalidParameter(_) => "InvalidParameter",
        }
    }
}
