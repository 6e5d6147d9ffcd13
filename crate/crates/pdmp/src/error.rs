use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unknown benchmark environment `{0}`")]
    UnknownEnvironment(String),

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("invalid network architecture: {0}")]
    InvalidArch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset contains a single class; occupancy training needs both labels")]
    SingleClassDataset,

    #[error("cost-gradient field produced a non-finite value")]
    NonFiniteField,

    #[error("sampler producer failed: {0}")]
    ProducerFailed(String),

    #[error("start configuration is in collision")]
    StartInCollision,

    #[error("goal configuration is in collision")]
    GoalInCollision,

    #[error("unsupported model file version {0}")]
    ModelVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
