use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("placement error: {0}")]
    Placement(String),

    #[error("unsatisfiable placement: {0}")]
    UnsatisfiablePlacement(String),

    #[error("{what}: parse error at line {line}, column {column}: {message}")]
    Parse {
        what: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {}: {message}", path.display())]
    Image { path: PathBuf, message: String },

    #[error("insufficient tracks: need at least {needed} tracks with velocity, have {have}")]
    InsufficientTracks { needed: usize, have: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("loss diverged (non-finite) at epoch {epoch}, step {step} with eta = {eta:e}; lower the learning rate")]
    Divergence { eta: f64, epoch: usize, step: usize },

    #[error("benchmark aborted at {phase} pass {pass}: {message}")]
    BenchAborted {
        phase: &'static str,
        pass: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(what: impl Into<String>, err: &serde_json::Error) -> Self {
        Error::Parse {
            what: what.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
