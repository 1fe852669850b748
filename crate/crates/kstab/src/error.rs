//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),

    #[error("polytope is unbounded")]
    Unbounded,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerics(String),

    #[error("internal consistency check failed: {0}")]
    Inconsistency(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code contract: validation/usage errors are 1, tolerance
    /// failures are raised separately by the CLI as 2.
    pub fn exit_code(&self) -> i32 {
        1
    }
}
