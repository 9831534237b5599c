use thiserror::Error;

/// Errors raised by the solver stack.
///
/// The variants map onto the CLI exit codes: usage and validation problems
/// are input errors, numeric and unsupported cases are computation failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A call violated an operation's precondition (bad depth, bad index).
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data failed validation (Hypothesis 1, datum range, schema).
    #[error("validation error: {0}")]
    Validation(String),

    /// A basin satisfied neither the equality nor the strict inequality
    /// condition of the classification.
    #[error("classification error: {0}")]
    Classification(String),

    /// Exact integer arithmetic overflowed 64 bits.
    #[error("integer overflow: {0}")]
    Overflow(String),

    /// A numeric routine produced a non-finite or unusable result.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The request is well-formed but outside what is implemented
    /// (e.g. a defective zero eigenvalue in the long-term limit).
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
