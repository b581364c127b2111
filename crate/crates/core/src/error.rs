//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A structural configuration value is invalid (zero rows, k > dim, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A vector or update does not match the expected dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Two sketches cannot be combined (different rows/cols/dim/seed).
    #[error("incompatible sketches: {0}")]
    IncompatibleSketch(String),

    /// Coordinate index outside `[0, dim)`.
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    /// A scalar parameter is outside its allowed range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Aggregation over an empty or inconsistent collection.
    #[error("aggregation error: {0}")]
    Aggregation(String),

    /// Dataset partitioning cannot satisfy its constraints.
    #[error("partition error: {0}")]
    Partition(String),

    /// Malformed input data (empty shard, bad serialized bytes, ...).
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
