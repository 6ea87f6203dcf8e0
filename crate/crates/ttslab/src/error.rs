use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("load error: {0}")]
    Load(String),

    #[error("normalization error: channel {channel} has zero variance")]
    ZeroVariance { channel: usize },

    #[error("bounds error: {0}")]
    Bounds(String),

    #[error("training diverged at step {step}: {term} is not finite")]
    NanLoss { step: u64, term: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
