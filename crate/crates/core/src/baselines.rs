//! Baseline optimizers: FedAvg and local top-k sparsification.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ClientShard;
use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::sparse::{self, SparseUpdate};

/// Learning-rate schedule evaluated at normalized progress in `[0, 1]`, so a
/// run compressed to fewer rounds re-indexes the same shape linearly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant { lr: f64 },
    /// Linear ramp from 0 to `peak_lr` at `peak_frac`, then down to `final_lr`.
    Triangular { peak_frac: f64, peak_lr: f64, final_lr: f64 },
}

impl LrSchedule {
    pub fn at(&self, progress: f64) -> f64 {
        let p = progress.clamp(0.0, 1.0);
        match *self {
            LrSchedule::Constant { lr } => lr,
            LrSchedule::Triangular { peak_frac, peak_lr, final_lr } => {
                if p <= peak_frac {
                    if peak_frac == 0.0 {
                        peak_lr
                    } else {
                        peak_lr * p / peak_frac
                    }
                } else if peak_frac >= 1.0 {
                    peak_lr
                } else {
                    peak_lr + (final_lr - peak_lr) * (p - peak_frac) / (1.0 - peak_frac)
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedAvgConfig {
    /// Local passes over the shard; fractional values truncate the last pass.
    pub local_epochs: f64,
    pub local_batch: usize,
    pub local_lr: f64,
    /// Fraction of the baseline round budget this run uses; the learning-rate
    /// schedule is re-indexed onto the reduced round count.
    #[serde(default = "default_one")]
    pub global_epochs_fraction: f64,
    #[serde(default)]
    pub lr_schedule: Option<LrSchedule>,
}

fn default_one() -> f64 {
    1.0
}

impl FedAvgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.local_epochs > 0.0) {
            return Err(Error::InvalidParameter {
                name: "local_epochs",
                reason: format!("must be > 0, got {}", self.local_epochs),
            });
        }
        if self.local_batch == 0 {
            return Err(Error::InvalidParameter {
                name: "local_batch",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.local_lr > 0.0) {
            return Err(Error::InvalidParameter {
                name: "local_lr",
                reason: format!("must be > 0, got {}", self.local_lr),
            });
        }
        if !(self.global_epochs_fraction > 0.0 && self.global_epochs_fraction <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "global_epochs_fraction",
                reason: format!("must be in (0, 1], got {}", self.global_epochs_fraction),
            });
        }
        Ok(())
    }

    /// Effective local learning rate at normalized run progress.
    pub fn lr_at(&self, progress: f64) -> f64 {
        self.lr_schedule.map_or(self.local_lr, |s| s.at(progress))
    }
}

/// Runs local minibatch SGD from `weights` and returns `initial - final`.
///
/// The shard is reshuffled each pass; a fractional final pass is truncated.
/// `local_batch` larger than the shard degrades to full-batch steps.
pub fn fedavg_local_train<R: Rng>(
    weights: &[f64],
    shard: &ClientShard,
    cfg: &FedAvgConfig,
    model: &ModelSpec,
    lr: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let examples = shard.examples();
    let batch_size = cfg.local_batch.min(examples.len());
    let steps_per_epoch = examples.len().div_ceil(batch_size);
    let total_steps =
        ((cfg.local_epochs * steps_per_epoch as f64).floor() as usize).max(1);

    let mut w = weights.to_vec();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut taken = 0;
    'outer: loop {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let (_, grad) = model.loss_and_grad(&w, &batch)?;
            for (wi, gi) in w.iter_mut().zip(&grad) {
                *wi -= lr * gi;
            }
            taken += 1;
            if taken == total_steps {
                break 'outer;
            }
        }
    }
    Ok(weights.iter().zip(&w).map(|(w0, wf)| w0 - wf).collect())
}

/// Averages local deltas weighted by shard sizes: `sum(D_i d_i) / sum(D_i)`.
pub fn fedavg_aggregate(deltas: &[Vec<f64>], shard_sizes: &[usize]) -> Result<Vec<f64>> {
    if deltas.is_empty() {
        return Err(Error::Aggregation("no deltas to aggregate".into()));
    }
    if deltas.len() != shard_sizes.len() {
        return Err(Error::Aggregation(format!(
            "{} deltas but {} shard sizes",
            deltas.len(),
            shard_sizes.len()
        )));
    }
    let dim = deltas[0].len();
    let total: f64 = shard_sizes.iter().map(|&s| s as f64).sum();
    if total <= 0.0 {
        return Err(Error::Aggregation("shard sizes sum to zero".into()));
    }
    let mut out = vec![0.0; dim];
    for (delta, &size) in deltas.iter().zip(shard_sizes) {
        if delta.len() != dim {
            return Err(Error::Aggregation("delta dimensions disagree".into()));
        }
        let w = size as f64 / total;
        for (o, &d) in out.iter_mut().zip(delta) {
            *o += w * d;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalTopKConfig {
    pub k: usize,
    pub lr: f64,
    /// Client-side error accumulation; requires stateful clients.
    #[serde(default)]
    pub local_error: bool,
    /// Server-side momentum on the aggregated update (`rho_g`).
    #[serde(default)]
    pub global_momentum: f64,
}

impl LocalTopKConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.k == 0 || self.k > dim {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: format!("must be in [1, {dim}], got {}", self.k),
            });
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidParameter {
                name: "lr",
                reason: format!("must be > 0, got {}", self.lr),
            });
        }
        if !(0.0..1.0).contains(&self.global_momentum) {
            return Err(Error::InvalidParameter {
                name: "global_momentum",
                reason: format!("must be in [0, 1), got {}", self.global_momentum),
            });
        }
        Ok(())
    }
}

/// Client-side sparsification: emits the exact top-k of the gradient plus any
/// carried error, and returns the new error state when error accumulation is
/// on (the accumulator minus what was emitted).
pub fn localtopk_client(
    gradient: &[f64],
    cfg: &LocalTopKConfig,
    error_state: Option<&[f64]>,
) -> Result<(SparseUpdate, Option<Vec<f64>>)> {
    cfg.validate(gradient.len())?;
    let mut acc = gradient.to_vec();
    if cfg.local_error {
        if let Some(err) = error_state {
            if err.len() != gradient.len() {
                return Err(Error::DimensionMismatch {
                    expected: gradient.len(),
                    got: err.len(),
                });
            }
            for (a, &e) in acc.iter_mut().zip(err) {
                *a += e;
            }
        }
    }
    let update = sparse::top_k_of_dense(&acc, cfg.k)?;
    let new_state = if cfg.local_error {
        for &(i, v) in update.entries() {
            acc[i] -= v;
        }
        Some(acc)
    } else {
        None
    };
    Ok((update, new_state))
}

/// One server-side momentum step: `velocity = rho_g * velocity + update`;
/// the returned vector is what gets applied.
pub fn global_momentum_step(velocity: &mut [f64], update: &[f64], rho_g: f64) -> Result<Vec<f64>> {
    if velocity.len() != update.len() {
        return Err(Error::DimensionMismatch { expected: velocity.len(), got: update.len() });
    }
    for (v, &u) in velocity.iter_mut().zip(update) {
        *v = rho_g * *v + u;
    }
    Ok(velocity.to_vec())
}
