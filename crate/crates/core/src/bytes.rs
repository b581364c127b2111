//! Communication accounting. Everything on the wire is 4 bytes per value.

use serde::{Deserialize, Serialize};

pub const BYTES_PER_VALUE: u64 = 4;

/// What a payload looks like on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Payload {
    Dense { dim: usize },
    Sparse { nnz: usize },
    Sketch { rows: usize, cols: usize },
}

/// Sparse-payload convention: count only the values (a zero-overhead index
/// encoding) or count index+value pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseBytes {
    #[default]
    ValuesOnly,
    IndexValue,
}

/// Sketch-payload convention: the full `rows x cols` table, or columns alone
/// (the convention under which a sketch's size is quoted by its column count).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SketchBytes {
    #[default]
    Full,
    ColsOnly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ByteConventions {
    pub sparse: SparseBytes,
    pub sketch: SketchBytes,
}

pub fn account_bytes(payload: Payload, conventions: &ByteConventions) -> u64 {
    match payload {
        Payload::Dense { dim } => BYTES_PER_VALUE * dim as u64,
        Payload::Sparse { nnz } => match conventions.sparse {
            SparseBytes::ValuesOnly => BYTES_PER_VALUE * nnz as u64,
            SparseBytes::IndexValue => 2 * BYTES_PER_VALUE * nnz as u64,
        },
        Payload::Sketch { rows, cols } => match conventions.sketch {
            SketchBytes::Full => BYTES_PER_VALUE * (rows as u64) * (cols as u64),
            SketchBytes::ColsOnly => BYTES_PER_VALUE * cols as u64,
        },
    }
}
