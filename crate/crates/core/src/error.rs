use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("sparsity is undefined for an all-zero coefficient set")]
    UndefinedSparsity,

    #[error("index {index} out of range for {len} coefficients")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unknown generator kind `{0}`")]
    UnknownKind(String),

    #[error("numerical failure at step {step}: {reason}")]
    NumericalFailure { step: usize, reason: String },

    #[error("{path}:{line}: {msg}")]
    Csv {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: malformed filter file at byte {offset}: {msg}")]
    FilterFile {
        path: PathBuf,
        offset: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
