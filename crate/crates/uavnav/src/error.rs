//! Crate-wide error type.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    /// An input vector or matrix had the wrong dimensions.
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// An API contract was violated (stale cache, missing RNG, bad count).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A dataset was empty where at least one record is required.
    #[error("empty dataset")]
    EmptyDataset,

    /// A configuration value is outside its documented range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The requested decision strategy cannot run on this prediction set
    /// (e.g. density-based selection over deterministic point predictions).
    #[error("unsupported strategy: {0}")]
    UnsupportedStrategy(String),

    /// A persisted file failed structural validation.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
