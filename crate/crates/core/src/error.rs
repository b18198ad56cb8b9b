use thiserror::Error;

use crate::types::TaskId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("environment exposes {env} tasks but the scheduler was built for {scheduler}")]
    TaskCountMismatch { env: usize, scheduler: usize },

    #[error("non-finite score at step {step} on task {task}")]
    NonFiniteScore { step: u64, task: TaskId },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("replay memory not ready: {len} transitions stored, {min} required")]
    ReplayNotReady { len: usize, min: usize },

    #[error("invalid task index {index} for a set of {count} tasks")]
    InvalidTask { index: usize, count: usize },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
