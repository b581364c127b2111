//! Window-coverage and recovery tests for the sliding-window error sketch,
//! checked against brute-force window sums.

mod common;

use common::*;
use fetchsim_core::rng::substream;
use fetchsim_core::sketch::{CountSketch, SketchConfig};
use fetchsim_core::sliding::SlidingWindowSketch;
use fetchsim_core::sparse::SparseUpdate;

fn sketch_of(cfg: SketchConfig, v: &[f64]) -> CountSketch {
    let mut sk = CountSketch::new(cfg).unwrap();
    sk.accumulate_dense(v, 1.0).unwrap();
    sk
}

/// After every insert, each window length `L in 1..=I` ending at the current
/// iteration is represented by exactly one slot, bit-identical to adding the
/// same `L` sketches in order.
#[test]
fn every_window_length_is_covered_exactly() {
    let window = 4;
    let dim = 12;
    let cfg = SketchConfig::new(3, 64, dim, 31).unwrap();
    let mut sw = SlidingWindowSketch::new(cfg, window).unwrap();
    let mut data_rng = substream(5, "window_cov", &[]);
    let gradients: Vec<Vec<f64>> = (0..10).map(|_| std_normal_vec(dim, &mut data_rng)).collect();

    for t in 0..gradients.len() {
        sw.insert(&sketch_of(cfg, &gradients[t])).unwrap();
        for len in 1..=window.min(t + 1) {
            // oracle: sketch each gradient of the window and add in stream order
            let mut oracle = CountSketch::new(cfg).unwrap();
            for g in &gradients[t + 1 - len..=t] {
                oracle.add_assign(&sketch_of(cfg, g)).unwrap();
            }
            let matches = sw
                .slots()
                .iter()
                .filter(|slot| slot.table() == oracle.table())
                .count();
            if t + 1 >= window {
                assert_eq!(
                    matches,
                    1,
                    "window length {len} at insert {} not covered exactly once",
                    t + 1
                );
            } else {
                // during warm-up, untouched slots duplicate the full prefix
                assert!(matches >= 1, "window length {len} at insert {} not covered", t + 1);
            }
        }
    }
}

/// The same coverage against the sketch of the brute-force vector sum of the
/// window, which accumulates in a different order, so equality is to 1e-9.
#[test]
fn window_slots_match_vector_sum_sketches() {
    let window = 3;
    let dim = 16;
    let cfg = SketchConfig::new(4, 32, dim, 77).unwrap();
    let mut sw = SlidingWindowSketch::new(cfg, window).unwrap();
    let mut data_rng = substream(6, "window_sum", &[]);
    let gradients: Vec<Vec<f64>> = (0..8).map(|_| std_normal_vec(dim, &mut data_rng)).collect();

    for t in 0..gradients.len() {
        sw.insert(&sketch_of(cfg, &gradients[t])).unwrap();
        for len in 1..=window.min(t + 1) {
            let mut sum = vec![0.0; dim];
            for g in &gradients[t + 1 - len..=t] {
                for (s, &x) in sum.iter_mut().zip(g) {
                    *s += x;
                }
            }
            let oracle = sketch_of(cfg, &sum);
            let found = sw
                .slots()
                .iter()
                .any(|slot| max_rel_err(slot.table(), oracle.table()) <= 1e-9);
            assert!(found, "no slot matches window length {len} at insert {}", t + 1);
        }
    }
}

/// A coordinate that is heavy only over the full window is recovered, checked
/// against the exact window-sum construction.
#[test]
fn coordinate_heavy_over_full_window_is_recovered() {
    let window = 4;
    let dim = 64;
    let planted = 13;
    let tau = 0.2;
    let cfg = SketchConfig::sized(
        dim,
        window,
        tau,
        0.01,
        fetchsim_core::sketch::ColsRule::InverseTauSq,
        411,
    )
    .unwrap();
    let mut sw = SlidingWindowSketch::new(cfg, window).unwrap();

    // per-round signal v/I plus small dense noise
    let v = 8.0;
    let mut data_rng = substream(17, "sw_heavy", &[]);
    let mut window_sum = vec![0.0; dim];
    for _ in 0..window {
        let mut g: Vec<f64> = std_normal_vec(dim, &mut data_rng)
            .into_iter()
            .map(|x| 0.05 * x)
            .collect();
        g[planted] += v / window as f64;
        for (s, &x) in window_sum.iter_mut().zip(&g) {
            *s += x;
        }
        sw.insert(&sketch_of(cfg, &g)).unwrap();
    }
    // construction check: planted is tau-heavy over the full window
    assert!(
        window_sum[planted].powi(2) >= tau * l2(&window_sum).powi(2),
        "construction failed to make the coordinate heavy"
    );

    let recovered = sw.find_heavy(tau).unwrap();
    assert!(
        recovered.indices().any(|i| i == planted),
        "planted coordinate not recovered: {:?}",
        recovered.entries()
    );
}

/// A coordinate heavy within a single gradient is recovered from the slot
/// that holds only the current iteration.
#[test]
fn single_round_heavy_hitter_is_recovered() {
    let window = 4;
    let dim = 64;
    let cfg = SketchConfig::new(7, 256, dim, 99).unwrap();
    let mut sw = SlidingWindowSketch::new(cfg, window).unwrap();
    let mut data_rng = substream(18, "sw_single", &[]);

    // a few noise-only rounds, then one round with a dominant coordinate
    for _ in 0..5 {
        let g: Vec<f64> = std_normal_vec(dim, &mut data_rng)
            .into_iter()
            .map(|x| 0.1 * x)
            .collect();
        sw.insert(&sketch_of(cfg, &g)).unwrap();
    }
    let mut g: Vec<f64> = std_normal_vec(dim, &mut data_rng)
        .into_iter()
        .map(|x| 0.1 * x)
        .collect();
    g[40] = 20.0;
    sw.insert(&sketch_of(cfg, &g)).unwrap();

    let recovered = sw.find_heavy(0.5).unwrap();
    assert!(recovered.indices().any(|i| i == 40));
}

/// Subtract-variant removal: with a collision-free config the recovered value
/// is exact, so subtracting it drives the slot estimate to zero.
#[test]
fn subtract_variant_cancels_exactly_in_collision_free_config() {
    let dim = 24;
    let cfg = SketchConfig::new(5, dim * dim, dim, 3).unwrap();
    let mut sw = SlidingWindowSketch::new(cfg, 2).unwrap();
    let mut g = vec![0.0; dim];
    g[11] = 4.25;
    sw.insert(&sketch_of(cfg, &g)).unwrap();

    let est = sw.slots()[0].estimate(11).unwrap();
    assert_eq!(est, 4.25);
    let delta = SparseUpdate::new(dim, vec![(11, est)]).unwrap();
    sw.subtract_recovered(&delta).unwrap();
    for slot in sw.slots() {
        assert!(slot.estimate(11).unwrap().abs() <= 1e-9);
    }
}

/// The zero-buckets variant empties every touched bucket in every slot.
#[test]
fn zero_bucket_variant_clears_touched_buckets() {
    let dim = 24;
    let cfg = SketchConfig::new(5, 64, dim, 3).unwrap();
    let mut sw = SlidingWindowSketch::new(cfg, 3).unwrap();
    let mut data_rng = substream(19, "sw_zero", &[]);
    for _ in 0..3 {
        let g = std_normal_vec(dim, &mut data_rng);
        sw.insert(&sketch_of(cfg, &g)).unwrap();
    }
    let delta = SparseUpdate::new(dim, vec![(4, 1.0), (9, -2.0)]).unwrap();
    sw.zero_recovered_buckets(&delta).unwrap();
    for slot in sw.slots() {
        assert_eq!(slot.estimate(4).unwrap(), 0.0);
        assert_eq!(slot.estimate(9).unwrap(), 0.0);
    }
}
