//! The FetchSGD optimizer: stateless clients sketch their gradients, and the
//! server runs momentum and error feedback entirely in sketch space.
//!
//! Each round the server computes, from the aggregated client sketch `S`:
//!
//! ```text
//! S_u <- rho * S_u + S                 momentum
//! S_e <- S_e + eta * S_u               error feedback
//! delta <- top-k of the unsketched S_e
//! S_e <- S_e - S(delta)                (or zero the touched buckets)
//! w <- w - delta
//! ```
//!
//! The default error update zeroes the buckets touched by `S(delta)` rather
//! than subtracting, and momentum factor masking (zeroing those same buckets
//! in `S_u`) is on by default; both behaviors are selectable. The error state
//! can also be a sliding window of sketches, which recovers coordinates that
//! are heavy over a span of consecutive rounds rather than cumulatively.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sketch::{CountSketch, SketchConfig};
use crate::sliding::SlidingWindowSketch;
use crate::sparse::{self, SparseUpdate};

/// How recovered coordinates are removed from the error state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    /// Zero every bucket touched by the sketch of the emitted update.
    #[default]
    ZeroBuckets,
    /// Subtract the sketch of the emitted update.
    Subtract,
}

/// Shape of the server-side error state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorStructure {
    #[default]
    SingleSketch,
    /// A sliding window of `window` sketches; candidates are recovered by the
    /// per-slot heaviness threshold `tau` and then truncated to the k largest.
    SlidingWindow { window: usize, tau: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FetchConfig {
    pub eta: f64,
    pub rho: f64,
    pub k: usize,
    pub sketch: SketchConfig,
    #[serde(default)]
    pub error_mode: ErrorMode,
    #[serde(default = "default_true")]
    pub momentum_masking: bool,
    #[serde(default)]
    pub error_structure: ErrorStructure,
}

fn default_true() -> bool {
    true
}

impl FetchConfig {
    /// A config with the default behaviors: zero-bucket error update,
    /// momentum factor masking on, single error sketch.
    pub fn new(eta: f64, rho: f64, k: usize, sketch: SketchConfig) -> Result<Self> {
        let cfg = Self {
            eta,
            rho,
            k,
            sketch,
            error_mode: ErrorMode::ZeroBuckets,
            momentum_masking: true,
            error_structure: ErrorStructure::SingleSketch,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Switches to sliding-window error accumulation. Momentum is turned off:
    /// the windowed analysis assumes `rho = 0`. Set `rho` afterwards to opt
    /// back in explicitly.
    pub fn with_sliding_window(mut self, window: usize, tau: f64) -> Result<Self> {
        self.error_structure = ErrorStructure::SlidingWindow { window, tau };
        self.rho = 0.0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: format!("must be > 0, got {}", self.eta),
            });
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidParameter {
                name: "rho",
                reason: format!("must be in [0, 1), got {}", self.rho),
            });
        }
        if self.k == 0 || self.k > self.sketch.dim {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: format!("must be in [1, {}], got {}", self.sketch.dim, self.k),
            });
        }
        if let ErrorStructure::SlidingWindow { window, tau } = self.error_structure {
            if window == 0 {
                return Err(Error::InvalidParameter {
                    name: "window",
                    reason: "must be >= 1".into(),
                });
            }
            if !(tau > 0.0 && tau < 1.0) {
                return Err(Error::InvalidParameter {
                    name: "tau",
                    reason: format!("must be in (0, 1), got {tau}"),
                });
            }
        }
        SketchConfig::new(self.sketch.rows, self.sketch.cols, self.sketch.dim, self.sketch.seed)?;
        Ok(())
    }
}

/// Server-side error state: one sketch or a sliding window of them.
#[derive(Clone, Debug)]
pub enum ErrorSketch {
    Single(CountSketch),
    Sliding(SlidingWindowSketch),
}

/// The aggregator's state: model weights, momentum sketch, error state.
#[derive(Clone, Debug)]
pub struct FetchServerState {
    weights: Vec<f64>,
    momentum: CountSketch,
    error: ErrorSketch,
    step: u64,
}

impl FetchServerState {
    pub fn new(cfg: &FetchConfig, initial_weights: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        if initial_weights.len() != cfg.sketch.dim {
            return Err(Error::DimensionMismatch {
                expected: cfg.sketch.dim,
                got: initial_weights.len(),
            });
        }
        let error = match cfg.error_structure {
            ErrorStructure::SingleSketch => ErrorSketch::Single(CountSketch::new(cfg.sketch)?),
            ErrorStructure::SlidingWindow { window, .. } => {
                ErrorSketch::Sliding(SlidingWindowSketch::new(cfg.sketch, window)?)
            }
        };
        Ok(Self {
            weights: initial_weights,
            momentum: CountSketch::new(cfg.sketch)?,
            error,
            step: 0,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn momentum_sketch(&self) -> &CountSketch {
        &self.momentum
    }

    pub fn error_sketch(&self) -> &ErrorSketch {
        &self.error
    }
}

/// Sketches one client's gradient. Pure: clients keep no state.
pub fn client_encode(gradient: &[f64], sketch_cfg: &SketchConfig) -> Result<CountSketch> {
    let mut sk = CountSketch::new(*sketch_cfg)?;
    sk.accumulate_dense(gradient, 1.0)?;
    Ok(sk)
}

/// Weighted average of client sketches. `None` weights means uniform `1/W`.
pub fn server_aggregate(
    sketches: &[CountSketch],
    weights: Option<&[f64]>,
) -> Result<CountSketch> {
    let first = sketches
        .first()
        .ok_or_else(|| Error::Aggregation("no sketches to aggregate".into()))?;
    if let Some(w) = weights {
        if w.len() != sketches.len() {
            return Err(Error::Aggregation(format!(
                "{} sketches but {} weights",
                sketches.len(),
                w.len()
            )));
        }
        if w.iter().any(|&x| x < 0.0) {
            return Err(Error::Aggregation("aggregation weights must be nonnegative".into()));
        }
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Aggregation("aggregation weights sum to zero".into()));
        }
    }
    let mut out = CountSketch::new(*first.config())?;
    let total: f64 = match weights {
        Some(w) => w.iter().sum(),
        None => sketches.len() as f64,
    };
    for (i, sk) in sketches.iter().enumerate() {
        let mut term = sk.clone();
        out.check_aggregate_compatible(&term)?;
        let wi = weights.map_or(1.0, |w| w[i]);
        term.scale(wi / total);
        out.add_assign(&term)?;
    }
    Ok(out)
}

impl CountSketch {
    fn check_aggregate_compatible(&self, other: &Self) -> Result<()> {
        if self.config() != other.config() {
            return Err(Error::Aggregation(format!(
                "mismatched sketch configs: {:?} vs {:?}",
                self.config(),
                other.config()
            )));
        }
        Ok(())
    }
}

/// One server round: momentum, error feedback, unsketch, error update,
/// optional momentum masking, weight update. Returns the emitted k-sparse
/// update.
pub fn server_step(
    state: &mut FetchServerState,
    aggregated: &CountSketch,
    cfg: &FetchConfig,
) -> Result<SparseUpdate> {
    if aggregated.config() != &cfg.sketch || state.momentum.config() != &cfg.sketch {
        return Err(Error::IncompatibleSketch(
            "aggregated sketch does not match the optimizer config".into(),
        ));
    }

    state.momentum.scale(cfg.rho);
    state.momentum.add_assign(aggregated)?;

    let mut scaled = state.momentum.clone();
    scaled.scale(cfg.eta);

    let delta = match &mut state.error {
        ErrorSketch::Single(s_e) => {
            s_e.add_assign(&scaled)?;
            s_e.top_k(cfg.k)?
        }
        ErrorSketch::Sliding(sw) => {
            sw.insert(&scaled)?;
            let tau = match cfg.error_structure {
                ErrorStructure::SlidingWindow { tau, .. } => tau,
                ErrorStructure::SingleSketch => {
                    return Err(Error::InvalidConfig(
                        "sliding error state with single-sketch config".into(),
                    ))
                }
            };
            let candidates = sw.find_heavy(tau)?;
            truncate_to_k(&candidates, cfg.k)?
        }
    };

    match (&mut state.error, cfg.error_mode) {
        (ErrorSketch::Single(s_e), ErrorMode::ZeroBuckets) => s_e.zero_buckets_of(&delta)?,
        (ErrorSketch::Single(s_e), ErrorMode::Subtract) => s_e.accumulate_sparse(&delta, -1.0)?,
        (ErrorSketch::Sliding(sw), ErrorMode::ZeroBuckets) => sw.zero_recovered_buckets(&delta)?,
        (ErrorSketch::Sliding(sw), ErrorMode::Subtract) => sw.subtract_recovered(&delta)?,
    }

    if cfg.momentum_masking {
        state.momentum.zero_buckets_of(&delta)?;
    }

    apply_sparse_update(&mut state.weights, &delta)?;
    state.step += 1;
    Ok(delta)
}

/// Keeps the `k` largest-magnitude entries of a recovered candidate set,
/// magnitude ties toward the lower index.
fn truncate_to_k(candidates: &SparseUpdate, k: usize) -> Result<SparseUpdate> {
    if candidates.nnz() <= k {
        return Ok(candidates.clone());
    }
    sparse::top_k_of_dense(&candidates.to_dense(), k)
}

/// `weights -= delta`, applied sparsely.
pub fn apply_sparse_update(weights: &mut [f64], delta: &SparseUpdate) -> Result<()> {
    if weights.len() != delta.dim() {
        return Err(Error::DimensionMismatch { expected: weights.len(), got: delta.dim() });
    }
    for &(i, v) in delta.entries() {
        weights[i] -= v;
    }
    Ok(())
}
