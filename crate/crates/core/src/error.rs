use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("spawn failed: {needed} vehicles do not fit in {available} spawn slots")]
    Spawn { needed: usize, available: usize },

    #[error("unknown vehicle id {0}")]
    UnknownVehicle(u32),

    #[error("vehicle {0} is not a human-driven vehicle")]
    NotHdv(u32),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("training fault: {0}")]
    TrainingFault(String),

    #[error("checkpoint load failed: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
