use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed a value outside the documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Shapes of the supplied objects do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A numerical guarantee was violated (solver residual too large,
    /// variance significantly negative, ...). Indicates corruption rather
    /// than bad input.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
