use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("insufficient data: need {need} transitions, buffer holds {have}")]
    InsufficientData { need: usize, have: usize },

    #[error("degenerate priorities: total sampling mass is zero")]
    DegeneratePriorities,

    #[error("degenerate batch: need at least 2 rows, got {0}")]
    DegenerateBatch(usize),

    #[error("covariance is not positive definite after regularization")]
    NotPositiveDefinite,

    #[error("training diverged at step {step}: {what}")]
    Divergence { step: usize, what: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Contract(_) => "contract",
            Error::NonFinite(_) => "non_finite",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::DegeneratePriorities => "degenerate_priorities",
            Error::DegenerateBatch(_) => "degenerate_batch",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::Divergence { .. } => "divergence",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
