use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PfmError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing directory: {0}")]
    MissingDirectory(PathBuf),
    #[error("malformed frame file {path}: {reason}")]
    MalformedFrame { path: PathBuf, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("too few samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("requested {requested} components but data rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },
    #[error("point left the frame")]
    OutOfBounds,
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unsupported model version: {0}")]
    Version(String),
    #[error("model file is truncated: {0}")]
    Truncated(String),
    #[error("model checksum mismatch: stored {stored}, computed {computed}")]
    Checksum { stored: String, computed: String },
}

pub type Result<T> = std::result::Result<T, PfmError>;

impl PfmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PfmError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(expected: impl ToString, got: impl ToString) -> Self {
        PfmError::DimensionMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
