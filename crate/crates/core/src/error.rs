use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("window out of range: needs sample index {needed} but the record has {len} samples")]
    OutOfRange { needed: usize, len: usize },

    #[error("record too short: {len} samples, need at least {min}")]
    RecordTooShort { len: usize, min: usize },

    #[error("update column builder used before initialization")]
    Uninitialized,

    #[error("insufficient excitation: {0}")]
    InsufficientExcitation(String),

    #[error("model order {order} exceeds numerical rank {rank}")]
    OrderExceedsRank { order: usize, rank: usize },

    #[error("similarity transform is singular (condition number {0:e})")]
    SingularTransform(f64),

    #[error("normal matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),

    #[error("state diverged at step {step} (norm {norm:e})")]
    Diverged { step: usize, norm: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
