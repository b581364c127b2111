//! Shared helpers for the integration suites.
#![allow(dead_code)]

pub mod oracle;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}

pub fn assert_tables_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: table sizes differ");
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        assert!(rel_close(x, y, tol), "{what}: entry {i} differs: {x} vs {y}");
    }
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            if x == y {
                0.0
            } else {
                (x - y).abs() / x.abs().max(y.abs()).max(1e-12)
            }
        })
        .fold(0.0, f64::max)
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn std_normal_vec<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

/// Runs `n` independent trials, parallel, preserving trial order.
pub fn run_trials<T: Send>(n: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// Finds a seed whose hash family maps all `dim` coordinates to distinct
/// buckets in every row, making coordinate recovery exact rather than
/// high-probability. Needs `cols` comfortably above `dim^2 / 2` to terminate
/// quickly.
pub fn collision_free_config(
    rows: usize,
    cols: usize,
    dim: usize,
) -> fetchsim_core::sketch::SketchConfig {
    use fetchsim_core::sketch::{CountSketch, SketchConfig};
    for seed in 0..100_000u64 {
        let cfg = SketchConfig::new(rows, cols, dim, seed).unwrap();
        let sk = CountSketch::new(cfg).unwrap();
        let clean = (0..rows).all(|r| {
            let mut seen = std::collections::HashSet::with_capacity(dim);
            (0..dim).all(|i| seen.insert(sk.bucket_index(r, i).unwrap()))
        });
        if clean {
            return cfg;
        }
    }
    panic!("no collision-free seed found for {rows}x{cols} over {dim} coordinates");
}

/// Central finite differences of the model's loss, the independent route for
/// gradient checking.
pub fn finite_diff_grad(
    spec: &fetchsim_core::models::ModelSpec,
    weights: &[f64],
    batch: &[fetchsim_core::models::Example],
    step: f64,
) -> Vec<f64> {
    (0..weights.len())
        .map(|i| {
            let mut wp = weights.to_vec();
            wp[i] += step;
            let mut wm = weights.to_vec();
            wm[i] -= step;
            let lp = spec.loss_and_grad(&wp, batch).unwrap().0;
            let lm = spec.loss_and_grad(&wm, batch).unwrap().0;
            (lp - lm) / (2.0 * step)
        })
        .collect()
}

/// Per-coordinate agreement at `tol` relative, with an absolute floor for
/// coordinates where the gradient itself is at numerical zero.
pub fn gradients_agree(analytic: &[f64], numeric: &[f64], tol: f64) -> std::result::Result<(), String> {
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let diff = (a - n).abs();
        if diff > tol * a.abs().max(n.abs()) && diff > 1e-7 {
            return Err(format!("coordinate {i}: analytic {a} vs finite-diff {n}"));
        }
    }
    Ok(())
}
