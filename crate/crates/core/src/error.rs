use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulation and training stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("drone parameters are not flyable: {0}")]
    NotFlyable(String),

    #[error("simulation fault at t = {t:.4} s: {reason}")]
    SimulationFault { t: f64, reason: String },

    #[error("insufficient calibration coverage: {0}")]
    Coverage(String),

    #[error("sensor networks are untrained")]
    Untrained,

    #[error("empty history")]
    EmptyHistory,

    #[error("empty trace")]
    EmptyTrace,

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("training fault: {0}")]
    TrainingFault(String),

    #[error("invalid weight file: {0}")]
    WeightFormat(String),

    #[error("missing checkpoint for mode {0}")]
    MissingCheckpoint(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
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
}
