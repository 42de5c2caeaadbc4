use thiserror::Error;

/// Errors surfaced by the simulation and training stack.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A state or control record contained non-finite fields.
    #[error("malformed state: {0}")]
    MalformedState(String),

    /// Tensor or table dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// An operation was called outside its allowed sequence.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Checkpoint content is unusable or incompatible.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl CoreError {
    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        CoreError::Shape(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Self {
        CoreError::Protocol(msg.into())
    }
}

impl From<serde_json::Error> for CoreError {
    fn from(e: serde_json::Error) -> Self {
        CoreError::Serde(e.to_string())
    }
}
