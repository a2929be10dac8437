//! Shared error type for the crate.

use thiserror::Error;

/// Errors produced by mesh construction, nonlinear solves, and run drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A state object does not admit the requested operation.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Newton iteration failed to reach the residual tolerance.
    #[error("solver divergence in {context}: residual {residual:.3e} after {iterations} iterations")]
    SolverDivergence {
        context: String,
        residual: f64,
        iterations: usize,
    },

    /// A linear system inside a Newton step had no solution.
    #[error("singular system in {context}")]
    SingularSystem { context: String },

    /// The requested operation is not defined for these inputs.
    #[error("unsupported operation: {0}")]
    UnsupportedOperation(String),

    /// A worker thread failed; the run was torn down.
    #[error("run aborted in worker {worker} at half-step {half_step}: {message}")]
    AbortedRun {
        worker: usize,
        half_step: usize,
        message: String,
    },

    /// I/O failure while writing diagnostics output.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Convenience constructor for [`Error::InvalidArgument`].
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
