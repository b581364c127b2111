//! The Count Sketch: a linear compression operator with unbiased coordinate
//! estimation, top-k heavy-hitter extraction, and L2-norm estimation.
//!
//! A sketch is an `rows x cols` table of real counters. Accumulating a vector
//! adds `sign_j(i) * v_i` into bucket `bucket_j(i)` for every row `j` and
//! nonzero coordinate `i`. Because accumulation is linear, sketches of the
//! same config can be added, scaled, and merged in any grouping, which is what
//! lets a server carry momentum and error state entirely in sketch space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{self, RowHasher};
use crate::sparse::{self, SparseUpdate};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Shape and hash-family seed of a Count Sketch.
///
/// Two configs with identical fields derive identical hash functions, so
/// sketches built independently on different machines stay mergeable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchConfig {
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
    pub seed: u64,
}

/// How to derive the column count from the heaviness threshold `tau`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColsRule {
    /// `cols = ceil(8 / tau)`: enough when a handful of coordinates carry
    /// most of the mass of the sketched vector.
    InverseTau,
    /// `cols = ceil(8 / tau^2)`: robust recovery of `tau`-heavy coordinates
    /// out of dense noise.
    InverseTauSq,
}

impl SketchConfig {
    pub fn new(rows: usize, cols: usize, dim: usize, seed: u64) -> Result<Self> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "sketch shape must be positive, got rows={rows} cols={cols} dim={dim}"
            )));
        }
        Ok(Self { rows, cols, dim, seed })
    }

    /// Sizes a sketch to recover `tau`-heavy coordinates over `rounds` reuses
    /// with failure probability `delta`: `rows = ceil(ln(dim * rounds / delta))`
    /// and columns per `rule`, clamped to at least 16.
    pub fn sized(
        dim: usize,
        rounds: usize,
        tau: f64,
        delta: f64,
        rule: ColsRule,
        seed: u64,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("must be in (0, 1), got {tau}"),
            });
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: format!("must be in (0, 1), got {delta}"),
            });
        }
        if dim == 0 || rounds == 0 {
            return Err(Error::InvalidConfig(
                "sized sketch needs dim >= 1 and rounds >= 1".into(),
            ));
        }
        let rows = ((dim as f64) * (rounds as f64) / delta).ln().ceil().max(1.0) as usize;
        let cols = match rule {
            ColsRule::InverseTau => (8.0 / tau).ceil(),
            ColsRule::InverseTauSq => (8.0 / (tau * tau)).ceil(),
        };
        let cols = (cols as usize).max(16);
        Self::new(rows, cols, dim, seed)
    }

    fn check_vector_dim(&self, len: usize) -> Result<()> {
        if len != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: len });
        }
        Ok(())
    }
}

/// A Count Sketch table plus its seeded hash family.
#[derive(Clone, Debug)]
pub struct CountSketch {
    config: SketchConfig,
    hashers: Vec<RowHasher>,
    table: Vec<f64>,
}

impl CountSketch {
    /// A zero-initialized sketch with a hash family derived from the seed.
    pub fn new(config: SketchConfig) -> Result<Self> {
        // Re-validate: configs can be deserialized without going through `new`.
        let config = SketchConfig::new(config.rows, config.cols, config.dim, config.seed)?;
        Ok(Self {
            hashers: hash::derive_rows(config.seed, config.rows, config.cols),
            table: vec![0.0; config.rows * config.cols],
            config,
        })
    }

    pub fn config(&self) -> &SketchConfig {
        &self.config
    }

    /// Row-major view of the counter table, for exact-equality tests.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn is_zero(&self) -> bool {
        self.table.iter().all(|&c| c == 0.0)
    }

    pub fn clear(&mut self) {
        self.table.fill(0.0);
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.config != other.config {
            return Err(Error::IncompatibleSketch(format!(
                "{:?} vs {:?}",
                self.config, other.config
            )));
        }
        Ok(())
    }

    /// Accumulates `scale * v` into the table. Zero coordinates are skipped,
    /// so sketching a zero vector leaves the table untouched.
    pub fn accumulate_dense(&mut self, v: &[f64], scale: f64) -> Result<()> {
        self.config.check_vector_dim(v.len())?;
        let cols = self.config.cols;
        let accumulate_row = |hasher: &RowHasher, row: &mut [f64]| {
            for (i, &vi) in v.iter().enumerate() {
                if vi != 0.0 {
                    row[hasher.bucket(i)] += hasher.sign(i) * scale * vi;
                }
            }
        };
        #[cfg(feature = "parallel")]
        {
            self.table
                .par_chunks_mut(cols)
                .zip(self.hashers.par_iter())
                .for_each(|(row, hasher)| accumulate_row(hasher, row));
        }
        #[cfg(not(feature = "parallel"))]
        {
            for (row, hasher) in self.table.chunks_mut(cols).zip(self.hashers.iter()) {
                accumulate_row(hasher, row);
            }
        }
        Ok(())
    }

    /// Sequential accumulate, kept callable for benchmarking against the
    /// parallel path.
    pub fn accumulate_dense_seq(&mut self, v: &[f64], scale: f64) -> Result<()> {
        self.config.check_vector_dim(v.len())?;
        let cols = self.config.cols;
        for (row, hasher) in self.table.chunks_mut(cols).zip(self.hashers.iter()) {
            for (i, &vi) in v.iter().enumerate() {
                if vi != 0.0 {
                    row[hasher.bucket(i)] += hasher.sign(i) * scale * vi;
                }
            }
        }
        Ok(())
    }

    /// Accumulates `scale * u` for a sparse update.
    pub fn accumulate_sparse(&mut self, u: &SparseUpdate, scale: f64) -> Result<()> {
        self.config.check_vector_dim(u.dim())?;
        let cols = self.config.cols;
        for (row, hasher) in self.table.chunks_mut(cols).zip(self.hashers.iter()) {
            for &(i, vi) in u.entries() {
                row[hasher.bucket(i)] += hasher.sign(i) * scale * vi;
            }
        }
        Ok(())
    }

    /// Element-wise table sum. Errors unless configs (including seeds) match.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        for (a, &b) in self.table.iter_mut().zip(&other.table) {
            *a += b;
        }
        Ok(())
    }

    /// Multiplies every counter by `alpha`.
    pub fn scale(&mut self, alpha: f64) {
        for c in &mut self.table {
            *c *= alpha;
        }
    }

    #[inline]
    fn row_estimate(&self, row: usize, coord: usize) -> f64 {
        let hasher = &self.hashers[row];
        hasher.sign(coord) * self.table[row * self.config.cols + hasher.bucket(coord)]
    }

    fn median_of(buf: &mut [f64]) -> f64 {
        buf.sort_unstable_by(f64::total_cmp);
        let n = buf.len();
        if n % 2 == 1 {
            buf[n / 2]
        } else {
            0.5 * (buf[n / 2 - 1] + buf[n / 2])
        }
    }

    /// Unbiased estimate of coordinate `i`: the median over rows of
    /// `sign_j(i) * table[j, bucket_j(i)]`.
    pub fn estimate(&self, i: usize) -> Result<f64> {
        if i >= self.config.dim {
            return Err(Error::IndexOutOfRange { index: i, dim: self.config.dim });
        }
        let mut buf: Vec<f64> = (0..self.config.rows).map(|r| self.row_estimate(r, i)).collect();
        Ok(Self::median_of(&mut buf))
    }

    /// Estimates every coordinate. Parallel over coordinates when the
    /// `parallel` feature is enabled; results are identical either way.
    pub fn estimate_all(&self) -> Vec<f64> {
        #[cfg(feature = "parallel")]
        {
            let rows = self.config.rows;
            (0..self.config.dim)
                .into_par_iter()
                .map_init(
                    || vec![0.0f64; rows],
                    |buf, i| {
                        for (r, slot) in buf.iter_mut().enumerate() {
                            *slot = self.row_estimate(r, i);
                        }
                        Self::median_of(buf)
                    },
                )
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.estimate_all_seq()
        }
    }

    /// Sequential full estimation, kept callable for benchmarking.
    pub fn estimate_all_seq(&self) -> Vec<f64> {
        let mut buf = vec![0.0f64; self.config.rows];
        (0..self.config.dim)
            .map(|i| {
                for (r, slot) in buf.iter_mut().enumerate() {
                    *slot = self.row_estimate(r, i);
                }
                Self::median_of(&mut buf)
            })
            .collect()
    }

    /// Estimates all coordinates and returns the `k` largest by magnitude,
    /// ties toward the lower index. Coordinates estimated exactly zero are
    /// only implicitly present: if fewer than `k` nonzero estimates exist the
    /// result is shorter than `k`.
    pub fn top_k(&self, k: usize) -> Result<SparseUpdate> {
        if k == 0 || k > self.config.dim {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: format!("k must be in [1, {}], got {k}", self.config.dim),
            });
        }
        sparse::top_k_of_dense(&self.estimate_all(), k)
    }

    /// AMS-style norm estimate: the median over rows of the root of the
    /// per-row sum of squared counters.
    pub fn l2_estimate(&self) -> f64 {
        let mut norms: Vec<f64> = self
            .table
            .chunks(self.config.cols)
            .map(|row| row.iter().map(|&c| c * c).sum::<f64>().sqrt())
            .collect();
        Self::median_of(&mut norms)
    }

    /// Bucket assigned to `coord` by `row`'s hash, for collision diagnostics.
    pub fn bucket_index(&self, row: usize, coord: usize) -> Result<usize> {
        if row >= self.config.rows {
            return Err(Error::IndexOutOfRange { index: row, dim: self.config.rows });
        }
        if coord >= self.config.dim {
            return Err(Error::IndexOutOfRange { index: coord, dim: self.config.dim });
        }
        Ok(self.hashers[row].bucket(coord))
    }

    /// Zeroes every bucket touched by the sketch of `delta`, in every row.
    pub fn zero_buckets_of(&mut self, delta: &SparseUpdate) -> Result<()> {
        self.config.check_vector_dim(delta.dim())?;
        let cols = self.config.cols;
        for (row, hasher) in self.table.chunks_mut(cols).zip(self.hashers.iter()) {
            for &(i, _) in delta.entries() {
                row[hasher.bucket(i)] = 0.0;
            }
        }
        Ok(())
    }

    /// Serializes as a header of `(rows, cols, dim, seed)` little-endian u64
    /// followed by row-major little-endian f32 counters.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 4 * self.table.len());
        for field in [
            self.config.rows as u64,
            self.config.cols as u64,
            self.config.dim as u64,
            self.config.seed,
        ] {
            out.extend_from_slice(&field.to_le_bytes());
        }
        for &c in &self.table {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 32 {
            return Err(Error::InvalidData("sketch header truncated".into()));
        }
        let read_u64 = |off: usize| {
            u64::from_le_bytes(bytes[off..off + 8].try_into().expect("slice is 8 bytes"))
        };
        let rows = read_u64(0) as usize;
        let cols = read_u64(8) as usize;
        let dim = read_u64(16) as usize;
        let seed = read_u64(24);
        let config = SketchConfig::new(rows, cols, dim, seed)?;
        let expected = 32 + 4 * rows * cols;
        if bytes.len() != expected {
            return Err(Error::InvalidData(format!(
                "sketch body length {} does not match shape (expected {expected})",
                bytes.len()
            )));
        }
        let mut sketch = Self::new(config)?;
        for (slot, chunk) in sketch.table.iter_mut().zip(bytes[32..].chunks_exact(4)) {
            *slot = f64::from(f32::from_le_bytes(chunk.try_into().expect("chunk is 4 bytes")));
        }
        Ok(sketch)
    }
}
