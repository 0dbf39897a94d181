use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("position {position} outside the positional table of size {size}")]
    PositionRange { position: usize, size: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("empty data: {0}")]
    EmptyData(String),
    #[error("numeric failure in epoch {epoch}, batch {batch}: {message}")]
    Numeric { epoch: usize, batch: usize, message: String },
}

impl ModelError {
    /// Numeric problems, as opposed to malformed input or configuration.
    pub fn is_numeric(&self) -> bool {
        matches!(self, ModelError::NonFinite(_) | ModelError::Numeric { .. })
    }
}
