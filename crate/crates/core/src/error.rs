use thiserror::Error;

/// Errors surfaced by map construction, data validation, and the sampler.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid areal map: {0}")]
    InvalidMap(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}
