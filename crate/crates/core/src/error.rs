use thiserror::Error;

/// Errors surfaced by the numerical core.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An input state lies outside the domain of the requested map.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration or tuning parameter is out of its valid range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// The caller combined values that cannot be combined (API misuse).
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
