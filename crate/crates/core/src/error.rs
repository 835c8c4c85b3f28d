use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt header in {path}: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("unsupported dimensionality {0} (expected 3)")]
    UnsupportedDimensionality(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("no foreground to fuse")]
    NoForeground,
    #[error("no annotation support")]
    NoAnnotationSupport,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("missing value for team {team}, axis {axis}")]
    MissingCell { team: String, axis: String },
    #[error("phantom geometry does not fit: {0}")]
    PhantomGeometry(String),
    #[error("no complete cases to evaluate")]
    NoCompleteCases,
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

impl EvalError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.into(),
            source,
        }
    }
}
