use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid universe: {0}")]
    InvalidUniverse(String),

    #[error("index {index} out of range for universe of {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("exact packing is limited to {cap} points, universe has {len}")]
    ExactPackingCap { cap: usize, len: usize },

    #[error("cannot compose zCDP budgets with (epsilon, delta) budgets")]
    MixedBudgetKinds,

    #[error("privacy budget exceeded: consumed {consumed}, limit {limit}")]
    BudgetExceeded { consumed: String, limit: String },

    #[error("decomposition has {levels} levels but {given} {what} were supplied")]
    LevelMismatch {
        levels: usize,
        given: usize,
        what: &'static str,
    },

    #[error("input norm {norm} exceeds release radius {radius}")]
    OutsideBall { norm: f64, radius: f64 },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("generator cap exceeded: {0}")]
    CapExceeded(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
