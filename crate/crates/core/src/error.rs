//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by any attrank operation.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand or input shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// An operation was called outside its contract (bad argument, wrong state).
    #[error("contract violation: {0}")]
    Contract(String),
    /// A value left the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A row in a pairs file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// A dataset failed validation (missing image, bad target, inconsistent shape).
    #[error("data error: {0}")]
    Data(String),
    /// A checkpoint file is missing, corrupt, truncated, or of an incompatible version.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    /// A non-finite value appeared where the computation requires finite numbers.
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
