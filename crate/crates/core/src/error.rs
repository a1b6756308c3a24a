use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("lag of {lag} steps needs more than {lag} snapshots, got {count}")]
    LagTooLarge { lag: usize, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("unsupported shape for export: {0}")]
    UnsupportedShape(String),

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("regularized Gram matrix is numerically singular (condition estimate {condition:e})")]
    SingularProblem { condition: f64 },

    #[error("eigen-solver failure: {0}")]
    ConvergenceFailure(String),

    #[error("eigen index {index} out of range 1..={available}")]
    InvalidIndex { index: usize, available: usize },

    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("empty series")]
    EmptySeries,

    #[error("data matrix is rank deficient: all singular values below tolerance")]
    RankDeficient,

    #[error("explicit feature dimension {dim} exceeds the limit of {limit}")]
    FeatureDimensionTooLarge { dim: usize, limit: usize },

    #[error("trajectory blew up at step {step} (|x| = {value:e}); reduce dt")]
    Blowup { step: usize, value: f64 },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("content hash mismatch for {path}: expected {expected}, found {found}")]
    HashMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
