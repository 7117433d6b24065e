use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cutoff {0}: the Fock space needs at least 2 levels")]
    InvalidCutoff(usize),

    #[error("photon number {n} is outside the truncated space of dimension {cutoff}")]
    OutOfCutoff { n: usize, cutoff: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("parameter layout: {0}")]
    Layout(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("optimization diverged at step {step}")]
    Divergence { step: usize },

    #[error("cutoff {cutoff} captures only {captured:.8} of the state norm")]
    InsufficientCutoff { cutoff: usize, captured: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
