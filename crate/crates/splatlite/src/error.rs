use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("empty model")]
    EmptyModel,
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("splat population reached zero at iteration {0}")]
    PopulationCollapse(usize),
    #[error("ply: {0}")]
    Ply(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
