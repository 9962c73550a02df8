use thiserror::Error;

#[derive(Debug, Error)]
pub enum FsnetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing parameter tensor {0:?}")]
    MissingParameter(String),
    #[error("weights file: {0}")]
    Format(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("degenerate fundamental matrix: {0}")]
    Degenerate(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error(transparent)]
    Geometry(#[from] epi_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FsnetError>;
