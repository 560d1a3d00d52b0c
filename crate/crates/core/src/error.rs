//! Shared error type.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument violated its domain (e.g. `mu <= 0`, `p` outside `(1, 2)`).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Inconsistent configuration, e.g. a locally weighted residual kind
    /// requested without a spread model.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed or out-of-contract input data.
    #[error("data error: {0}")]
    Data(String),

    /// A numeric procedure failed to converge or left its stable range.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An API usage contract was violated, e.g. calibrating on rows the
    /// predictor was trained on.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
