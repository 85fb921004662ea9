use thiserror::Error;

/// Errors shared by all drnd-core modules.
#[derive(Debug, Error)]
pub enum DrndError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("degenerate target ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DrndError>;
