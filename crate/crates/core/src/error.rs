use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum JdtcError {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A scenario, sensor or filter configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),
    /// An internal invariant was violated.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, JdtcError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(JdtcError::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(JdtcError::Config(msg.into()))
}
