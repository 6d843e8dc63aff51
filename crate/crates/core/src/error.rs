use thiserror::Error;

/// Errors raised by the model, dynamics and exact-analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Caller supplied arguments that violate a precondition.
    #[error("usage error: {0}")]
    Usage(String),
    /// A size guard tripped; the message carries the computed size.
    #[error("resource limit: {0}")]
    Resource(String),
    /// A mathematical domain condition (e.g. contraction) fails.
    #[error("domain error: {0}")]
    Domain(String),
    /// A solver failed in a way that indicates a bug.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
