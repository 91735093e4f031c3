use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("outside the domain of convergence: {0}")]
    Domain(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative routine stopped before reaching its tolerance.
    #[error("numeric failure: {message} (best estimate {estimate})")]
    Numeric { message: String, estimate: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
