//! Deterministic randomness: a SplitMix64 mixer for seed derivation and
//! ChaCha8-backed named substreams of a master seed.
//!
//! Every source of randomness in the simulator is a substream identified by
//! `(master_seed, label, indices)`, so any run is replayable from its master
//! seed alone. The derivation chain is spelled out here rather than delegated
//! to an unspecified hasher so that seeds never change under toolchain
//! upgrades.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; bijective on `u64`.
#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Minimal SplitMix64 stream, used to derive hash coefficients and sub-seeds.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }
}

/// Derives a 64-bit sub-seed from a master seed, a label, and indices.
pub fn derive_seed(master: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = mix64(master ^ GOLDEN);
    for b in label.bytes() {
        h = mix64(h ^ u64::from(b));
    }
    for &i in indices {
        h = mix64(h ^ i.wrapping_mul(GOLDEN));
    }
    h
}

/// A named, index-addressed substream of the master seed.
///
/// Distinct `(label, indices)` pairs yield independent streams; the same pair
/// always yields the same stream.
pub fn substream(master: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, indices))
}
