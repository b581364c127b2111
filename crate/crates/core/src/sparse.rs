//! k-sparse updates: index/value pairs over a fixed ambient dimension.

use crate::error::{Error, Result};

/// A sparse vector with strictly increasing indices and no explicit zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseUpdate {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseUpdate {
    /// Builds a sparse update, validating the entry invariants: indices
    /// strictly increasing and within `[0, dim)`, values nonzero.
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("sparse update dim must be >= 1".into()));
        }
        let mut prev: Option<usize> = None;
        for &(idx, val) in &entries {
            if idx >= dim {
                return Err(Error::IndexOutOfRange { index: idx, dim });
            }
            if let Some(p) = prev {
                if idx <= p {
                    return Err(Error::InvalidData(format!(
                        "sparse indices must be strictly increasing, got {p} then {idx}"
                    )));
                }
            }
            if val == 0.0 {
                return Err(Error::InvalidData(format!(
                    "sparse update stores an explicit zero at index {idx}"
                )));
            }
            prev = Some(idx);
        }
        Ok(Self { dim, entries })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    /// Collects the nonzero coordinates of a dense vector.
    pub fn from_dense(values: &[f64]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        Self { dim: values.len(), entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(i, _)| i)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    /// The same update with every value negated.
    pub fn negated(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, v)| (i, -v)).collect(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt()
    }
}

/// Selects the `k` largest-magnitude nonzero entries of a dense vector,
/// breaking magnitude ties toward the lower index. Returns fewer than `k`
/// entries when fewer nonzero values exist.
pub fn top_k_of_dense(values: &[f64], k: usize) -> Result<SparseUpdate> {
    if k == 0 || k > values.len() {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: format!("k must be in [1, {}], got {k}", values.len()),
        });
    }
    let mut nonzero: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (i, v))
        .collect();
    nonzero.sort_unstable_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .expect("gradient values must not be NaN")
            .then(a.0.cmp(&b.0))
    });
    nonzero.truncate(k);
    nonzero.sort_unstable_by_key(|&(i, _)| i);
    SparseUpdate::new(values.len(), nonzero)
}
