//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any toolkit operation.
///
/// The CLI maps these onto process exit codes: invalid arguments exit 1,
/// data/shape/format problems exit 2, numerical failures exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code class for the CLI: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArg(_) => 1,
            Error::Shape(_) | Error::Dataset(_) | Error::Degenerate(_) => 2,
            Error::Io(_) | Error::Json(_) => 2,
            Error::NonFinite(_) | Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
