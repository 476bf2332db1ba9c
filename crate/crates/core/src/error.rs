use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NndError {
    /// Caller supplied an invalid argument (shape mismatch, negative threshold, ...).
    #[error("invalid argument: {0}")]
    Argument(String),
    /// Input outside the domain on which a formula is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// A numerical routine failed (non-convergence, exhausted rejection budget).
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Contradictory chain or model configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Operation invoked in a state where it is not allowed.
    #[error("logic error: {0}")]
    Logic(String),
}

pub type Result<T> = std::result::Result<T, NndError>;

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(NndError::Argument(msg.into()))
}
