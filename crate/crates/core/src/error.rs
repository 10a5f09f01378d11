//! Error type shared by every module of the crate.

use thiserror::Error;

/// Unified error type for placement, optimization, and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An enumeration or expansion would exceed a hard resource guard.
    /// Guards fail loudly instead of silently approximating.
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    /// An iterative solver stopped before reaching the requested tolerance.
    /// `best_bound` carries the tightest lower bound proved so far, if any.
    #[error("failed to converge: {reason}")]
    Convergence {
        reason: String,
        best_bound: Option<f64>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn resource(msg: impl Into<String>) -> Self {
        Error::ResourceLimit(msg.into())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
