//! Crate-wide error type.
//!
//! The variants mirror the failure vocabulary used throughout the crate:
//! dimension errors for shape mismatches, index errors for out-of-range
//! labels, parameter errors for invalid hyperparameters, contract errors for
//! misuse of an operation (e.g. backward on a non-scalar), and parse/IO
//! errors for dataset ingestion.

use thiserror::Error;

/// Error type shared by all modules of the workbench core.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Tensor shapes are incompatible with the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An index (typically a class label) is out of range.
    #[error("index error: {0}")]
    Index(String),

    /// A hyperparameter violates its documented domain.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An operation was invoked outside its contract.
    #[error("contract error: {0}")]
    Contract(String),

    /// A CSV row could not be parsed; `line` is 1-based and counts the header.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Underlying IO failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, CoreError>;
