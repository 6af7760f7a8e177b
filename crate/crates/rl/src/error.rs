use thiserror::Error;
use wcs_core::CoreError;

#[derive(Debug, Error)]
pub enum RlError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("simulation produced a non-finite state after {steps} steps")]
    NonFiniteState { steps: usize },
    #[error("action contains a non-finite component")]
    NonFiniteAction,
    #[error("non-finite {what} during training")]
    NonFiniteLoss { what: &'static str },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RlError> = std::result::Result<T, E>;
