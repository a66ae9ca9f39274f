use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operation requires a finite MDP with explicit transition tables")]
    NotFinite,

    #[error("unknown action {action} (action count {count})")]
    UnknownAction { action: usize, count: usize },

    #[error("point is not on the unit sphere (norm {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("point is not in the state support")]
    OutsideSupport,

    #[error("nonpositive value {value} at position {index}")]
    NonPositive { index: usize, value: f64 },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("problem too large for exact enumeration: {0}")]
    Intractable(String),

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
