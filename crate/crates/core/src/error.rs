use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("diffusion step {step} outside 1..={max}")]
    StepOutOfRange { step: usize, max: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("need at least {needed} points to fit {needed} components, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("covariance of component {0} is not positive definite")]
    NotPositiveDefinite(usize),

    #[error("{0}")]
    Horizon(String),

    #[error("enumeration exceeded node budget of {budget}; use a shorter horizon")]
    NodeBudget { budget: usize },

    #[error("environment {index} failed: {message}")]
    Env { index: usize, message: String },

    #[error("non-finite {what} at update {update}: {snapshot}")]
    NonFinite {
        what: String,
        update: u64,
        snapshot: String,
    },

    #[error("checkpoint version mismatch: expected {expected}, found {found}")]
    CheckpointVersion { expected: u32, found: u32 },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
