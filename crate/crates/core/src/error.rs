use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("cost index {index} out of range ({count} costs)")]
    CostIndex { index: usize, count: usize },

    #[error("KL divergence is infinite: {0}")]
    InfiniteKl(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate constraint gradient (b^T H^-1 b = {0:e})")]
    DegenerateConstraint(f64),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("environment error at step {step}: {message}")]
    Environment { step: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
