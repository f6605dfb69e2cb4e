//! Error taxonomy shared by every module of the crate.
//!
//! The variants mirror the failure classes of the numeric pipeline: shape
//! mismatches, violated preconditions, numeric-domain failures (non-finite
//! values, kernel evaluated inside its pole), diverging iterations, and I/O or
//! format problems while moving datasets and models between disk and memory.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix had the wrong shape for the requested operation.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    /// A documented precondition of an operation was violated.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Input left the mathematical domain of an operation (kernel pole,
    /// query at an obstacle centre, epsilon outside (0, 1), ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation produced a non-finite value.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A parameter configuration is too degenerate to continue (for example a
    /// near-zero axis vector in the SPD parametrization).
    #[error("degenerate parameter: {0}")]
    Degenerate(String),

    /// A rollout left the finite range of f64 at the given step.
    #[error("rollout diverged at step {step}")]
    RolloutDiverged { step: usize },

    /// Training produced a non-finite loss at the given iteration.
    #[error("training diverged at iteration {iteration}")]
    TrainingDiverged { iteration: usize },

    /// A data file could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Shorthand for a [`Error::Precondition`] with a formatted message.
    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    /// Shorthand for a [`Error::Domain`] with a formatted message.
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

/// Returns an error if any entry of `v` is NaN or infinite.
pub fn ensure_finite(v: &[f64], context: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context.to_string()))
    }
}
