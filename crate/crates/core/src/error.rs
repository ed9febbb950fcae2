use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("activation prefix covers {got} layers, expected {expected}")]
    PrefixLength { expected: usize, got: usize },

    #[error("layer index {0} is out of range")]
    LayerIndex(usize),

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("network contains maxout layers; use the maxout counter")]
    MaxoutLayer,

    #[error("operation requires a bounded box domain")]
    UnboundedDomain,

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("missing data: {0}")]
    Missing(&'static str),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
