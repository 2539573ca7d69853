//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate token {0:?}")]
    DuplicateToken(String),

    #[error("missing special token {0:?} in vocabulary")]
    MissingSpecial(&'static str),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in {0}")]
    Numeric(&'static str),

    #[error("training error: {0}")]
    Training(String),

    #[error("anchor selection over an empty candidate set")]
    EmptyCandidates,

    #[error("missing input file: {0}")]
    MissingFile(std::path::PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
