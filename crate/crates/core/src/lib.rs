//! Count-sketch gradient compression with a deterministic federated-learning
//! simulation harness.
//!
//! The crate is organized around a linear [`sketch::CountSketch`] compression
//! operator. Because the sketch is linear, momentum and error accumulation can
//! be carried out entirely in sketch space on an aggregation server, which is
//! what the [`fetchsgd`] optimizer does. [`baselines`] provides FedAvg and
//! local top-k sparsification for comparison, and [`sim`] runs all three under
//! one deterministic round loop with bit-exact communication accounting.
//!
//! With the `parallel` feature (on by default) the hot inner loops — full
//! unsketching, per-client payload computation, dense accumulation — run on
//! rayon. Disabling the feature leaves the sequential fallbacks, which produce
//! bit-identical results.

pub mod baselines;
pub mod bytes;
pub mod data;
pub mod error;
pub mod fetchsgd;
mod hash;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod sim;
pub mod sketch;
pub mod sliding;
pub mod sparse;

pub use error::{Error, Result};
pub use sketch::{CountSketch, SketchConfig};
pub use sparse::SparseUpdate;
