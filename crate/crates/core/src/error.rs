use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the foraging stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid arena config: {0}")]
    InvalidConfig(String),

    #[error("degenerate direction: zero displacement")]
    ZeroDisplacement,

    #[error("feature length {got} does not match network input {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset has {len} pairs, need at least {min}")]
    DatasetTooSmall { len: usize, min: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("bad glob pattern: {0}")]
    Pattern(#[from] glob::PatternError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
