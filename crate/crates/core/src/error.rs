use thiserror::Error;

/// Errors raised anywhere in the simulator, environment or trainer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("schedule violates the one-channel-per-slot constraint at {0:?}")]
    Constraint(Vec<(usize, usize)>),
    #[error("energy efficiency is undefined for an empty schedule")]
    UndefinedEfficiency,
    #[error("action error: {0}")]
    Action(String),
    #[error("lifecycle error: {0}")]
    Lifecycle(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
