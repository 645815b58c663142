use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid ground metric: {0}")]
    InvalidMetric(String),

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),

    #[error("character {char_id} out of range for alphabet of size {size}")]
    CharOutOfRange { char_id: usize, size: usize },

    #[error("ingestion failed: {0}")]
    Ingestion(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
