//! Sliding-window error accumulation: `window` staggered Count Sketches that
//! together cover every window of up to `window` consecutive inserts.
//!
//! Slot `j` is zeroed once every `window` inserts, round-robin, so right after
//! insert `t` the slots hold the sketched sums of the last `1, 2, ..., window`
//! inserts. The scheduled reset runs at the top of `insert`, which is the same
//! schedule as resetting at the end of the previous round once recovery has
//! finished: no read can occur in between.

use crate::error::{Error, Result};
use crate::sketch::{CountSketch, SketchConfig};
use crate::sparse::SparseUpdate;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Debug)]
pub struct SlidingWindowSketch {
    slots: Vec<CountSketch>,
    last_reset: Vec<u64>,
    iteration: u64,
}

impl SlidingWindowSketch {
    pub fn new(config: SketchConfig, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidParameter {
                name: "window",
                reason: "must be >= 1".into(),
            });
        }
        let slots = (0..window)
            .map(|_| CountSketch::new(config))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { slots, last_reset: vec![0; window], iteration: 0 })
    }

    pub fn window(&self) -> usize {
        self.slots.len()
    }

    pub fn config(&self) -> &SketchConfig {
        self.slots[0].config()
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn slots(&self) -> &[CountSketch] {
        &self.slots
    }

    /// Inserts since each slot was last zeroed (counting the zeroing round's
    /// own insert as age 0). After warm-up these are a permutation of
    /// `{0, ..., window-1}`.
    pub fn ages(&self) -> Vec<u64> {
        self.last_reset.iter().map(|&r| self.iteration - r).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.slots.iter().all(CountSketch::is_zero)
    }

    /// Adds `s` into every slot, after zeroing the slot whose turn it is on
    /// the round-robin schedule.
    pub fn insert(&mut self, s: &CountSketch) -> Result<()> {
        if s.config() != self.config() {
            return Err(Error::IncompatibleSketch(format!(
                "{:?} vs {:?}",
                s.config(),
                self.config()
            )));
        }
        let t = self.iteration + 1;
        let scheduled = ((t - 1) % self.slots.len() as u64) as usize;
        self.slots[scheduled].clear();
        self.last_reset[scheduled] = t;
        #[cfg(feature = "parallel")]
        {
            self.slots
                .par_iter_mut()
                .try_for_each(|slot| slot.add_assign(s))?;
        }
        #[cfg(not(feature = "parallel"))]
        {
            for slot in &mut self.slots {
                slot.add_assign(s)?;
            }
        }
        self.iteration = t;
        Ok(())
    }

    /// Recovers, from every slot, coordinates whose estimated squared value
    /// reaches `tau` times the slot's squared norm estimate, and returns the
    /// deduplicated union. A coordinate surfacing in several slots keeps the
    /// value from the slot where its estimate is largest in magnitude.
    pub fn find_heavy(&self, tau: f64) -> Result<SparseUpdate> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("must be in (0, 1), got {tau}"),
            });
        }
        let dim = self.config().dim;
        let mut best: Vec<f64> = vec![0.0; dim];
        for slot in &self.slots {
            let threshold_sq = tau * slot.l2_estimate().powi(2);
            for (i, est) in slot.estimate_all().into_iter().enumerate() {
                if est != 0.0 && est * est >= threshold_sq && est.abs() > best[i].abs() {
                    best[i] = est;
                }
            }
        }
        Ok(SparseUpdate::from_dense(&best))
    }

    /// Zeroes, in every slot, the buckets touched by the sketch of `delta`.
    pub fn zero_recovered_buckets(&mut self, delta: &SparseUpdate) -> Result<()> {
        for slot in &mut self.slots {
            slot.zero_buckets_of(delta)?;
        }
        Ok(())
    }

    /// Subtracts the sketch of `delta` from every slot.
    pub fn subtract_recovered(&mut self, delta: &SparseUpdate) -> Result<()> {
        for slot in &mut self.slots {
            slot.accumulate_sparse(delta, -1.0)?;
        }
        Ok(())
    }
}
