use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dictionary is undercomplete: {columns} columns < {rows} rows")]
    Undercomplete { rows: usize, columns: usize },

    #[error("dictionary gram matrix is not Toeplitz along dimension {dim}")]
    NotToeplitz { dim: usize },

    #[error("power iteration did not converge after {iters} iterations")]
    NoConvergence { iters: usize },

    #[error("non-finite loss at {context}")]
    NonFinite { context: String },

    #[error("schedule violation: {0}")]
    Schedule(String),

    #[error("{path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
