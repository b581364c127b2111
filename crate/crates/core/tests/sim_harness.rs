//! Harness-level checks: degenerate optimizer equivalences against plain
//! gradient descent, reproducibility, sampling uniformity, partition
//! properties, and closed-form byte accounting.

mod common;

use common::*;
use fetchsim_core::baselines::{FedAvgConfig, LocalTopKConfig};
use fetchsim_core::bytes::ByteConventions;
use fetchsim_core::data::{partition_noniid, sample_clients, BlobsTask, ClientShard, LeastSquaresTask};
use fetchsim_core::fetchsgd::FetchConfig;
use fetchsim_core::metrics::render_csv;
use fetchsim_core::models::{Example, ModelSpec, Target};
use fetchsim_core::rng::substream;
use common::oracle::centralized_gd;
use fetchsim_core::sim::{evaluate_risk, OptimizerConfig, RoundConfig, Simulation};
use fetchsim_core::sketch::SketchConfig;
use proptest::prelude::*;

fn round_cfg(participants: usize) -> RoundConfig {
    RoundConfig {
        participants,
        conventions: ByteConventions::default(),
        dense_download: false,
        weighted_aggregation: false,
    }
}

fn equal_shard_task(clients: usize, per_client: usize, dim: usize) -> (ModelSpec, Vec<ClientShard>) {
    let task = LeastSquaresTask {
        num_clients: clients,
        examples_per_client: per_client,
        num_features: dim,
        mean_scale: 1.0,
        feature_noise: 1.0,
        label_noise: 0.05,
    };
    let (shards, _) = task.generate(2718).unwrap();
    (ModelSpec::LeastSquares { num_features: dim }, shards)
}

#[test]
fn fedavg_single_local_step_equals_centralized_gd() {
    let (model, shards) = equal_shard_task(5, 4, 6);
    let lr = 0.05;
    let cfg = FedAvgConfig {
        local_epochs: 1.0,
        local_batch: 100,
        local_lr: lr,
        global_epochs_fraction: 1.0,
        lr_schedule: None,
    };
    let mut sim = Simulation::new(
        model.clone(),
        shards.clone(),
        OptimizerConfig::Fedavg(cfg),
        round_cfg(5),
        vec![0.0; 6],
        42,
        3,
    )
    .unwrap();
    sim.run(3).unwrap();
    let reference = centralized_gd(&model, &shards, vec![0.0; 6], lr, 3);
    let err = l2_diff(sim.weights(), &reference) / l2(&reference);
    assert!(err <= 1e-9, "fedavg deviates from centralized GD by {err}");
}

#[test]
fn local_topk_with_full_k_equals_centralized_gd() {
    let (model, shards) = equal_shard_task(5, 4, 6);
    let lr = 0.05;
    let cfg = LocalTopKConfig { k: 6, lr, local_error: false, global_momentum: 0.0 };
    let mut sim = Simulation::new(
        model.clone(),
        shards.clone(),
        OptimizerConfig::LocalTopk(cfg),
        round_cfg(5),
        vec![0.0; 6],
        42,
        3,
    )
    .unwrap();
    sim.run(3).unwrap();
    let reference = centralized_gd(&model, &shards, vec![0.0; 6], lr, 3);
    let err = l2_diff(sim.weights(), &reference) / l2(&reference);
    assert!(err <= 1e-9, "local top-k deviates from centralized GD by {err}");
}

#[test]
fn collision_free_fetchsgd_equals_centralized_gd() {
    let dim = 24;
    let (model, shards) = equal_shard_task(4, 3, dim);
    let eta = 0.05;
    let sketch = collision_free_config(5, dim * dim, dim);
    let mut cfg = FetchConfig::new(eta, 0.0, dim, sketch).unwrap();
    cfg.error_mode = fetchsim_core::fetchsgd::ErrorMode::Subtract;
    cfg.momentum_masking = false;
    let mut sim = Simulation::new(
        model.clone(),
        shards.clone(),
        OptimizerConfig::Fetchsgd(cfg),
        round_cfg(4),
        vec![0.0; dim],
        42,
        3,
    )
    .unwrap();
    sim.run(3).unwrap();
    let reference = centralized_gd(&model, &shards, vec![0.0; dim], eta, 3);
    let err = l2_diff(sim.weights(), &reference) / l2(&reference);
    assert!(err <= 1e-6, "fetchsgd deviates from centralized GD by {err}");
}

#[test]
fn metrics_csv_is_byte_identical_across_runs() {
    let (model, shards) = equal_shard_task(8, 3, 10);
    let sketch = SketchConfig::new(5, 64, 10, 7).unwrap();
    let cfg = FetchConfig::new(0.02, 0.9, 5, sketch).unwrap();
    let run = || {
        let mut sim = Simulation::new(
            model.clone(),
            shards.clone(),
            OptimizerConfig::Fetchsgd(cfg.clone()),
            round_cfg(3),
            vec![0.0; 10],
            1234,
            12,
        )
        .unwrap();
        render_csv(&sim.run(12).unwrap())
    };
    assert_eq!(run(), run());
}

/// Chi-square uniformity of client selection: 1e5 single-client draws over
/// 100 clients; critical value for 99 degrees of freedom at alpha = 0.01.
#[test]
fn client_sampling_is_uniform() {
    let clients = 100usize;
    let rounds = 100_000u64;
    let mut counts = vec![0u64; clients];
    for round in 0..rounds {
        let mut rng = substream(31337, "client_sample", &[round]);
        let ids = sample_clients(clients, 1, &mut rng).unwrap();
        counts[ids[0]] += 1;
    }
    let expected = rounds as f64 / clients as f64;
    let chi_sq: f64 =
        counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi_sq < 134.642, "chi-square {chi_sq} exceeds the alpha=0.01 critical value");
}

#[test]
fn byte_totals_match_closed_forms() {
    let dim = 10;
    let (model, shards) = equal_shard_task(6, 3, dim);
    let rounds = 7u64;
    let w = 4u64;

    // fetchsgd upload: rounds * W * 4 * r * c; dense download: rounds * W * 4d
    let sketch = SketchConfig::new(5, 32, dim, 7).unwrap();
    let cfg = FetchConfig::new(0.02, 0.9, 5, sketch).unwrap();
    let mut rc = round_cfg(w as usize);
    rc.dense_download = true;
    let mut sim = Simulation::new(
        model.clone(),
        shards.clone(),
        OptimizerConfig::Fetchsgd(cfg),
        rc,
        vec![0.0; dim],
        5,
        rounds,
    )
    .unwrap();
    let metrics = sim.run(rounds).unwrap();
    let up: u64 = metrics.iter().map(|m| m.bytes_up).sum();
    let down: u64 = metrics.iter().map(|m| m.bytes_down).sum();
    assert_eq!(up, rounds * w * 4 * 5 * 32);
    assert_eq!(down, rounds * w * 4 * dim as u64);

    // local top-k upload with dense gradients: rounds * W * 4k
    let k = 3;
    let cfg = LocalTopKConfig { k, lr: 0.05, local_error: false, global_momentum: 0.0 };
    let mut sim = Simulation::new(
        model,
        shards,
        OptimizerConfig::LocalTopk(cfg),
        round_cfg(w as usize),
        vec![0.0; dim],
        5,
        rounds,
    )
    .unwrap();
    let metrics = sim.run(rounds).unwrap();
    let up: u64 = metrics.iter().map(|m| m.bytes_up).sum();
    assert_eq!(up, rounds * w * 4 * k as u64);
}

/// Clients with disjoint gradient supports: the aggregated top-k update has
/// exactly `W * k` nonzeros, so download compression collapses toward 1x.
#[test]
fn disjoint_supports_add_up() {
    let clients = 4usize;
    let block = 4usize;
    let dim = clients * block;
    let k = 2usize;
    // client i's features live in its own block of coordinates
    let shards: Vec<ClientShard> = (0..clients)
        .map(|c| {
            let mut rng = substream(88, "disjoint", &[c as u64]);
            let examples = (0..3)
                .map(|_| {
                    let mut features = vec![0.0; dim];
                    for f in features[c * block..(c + 1) * block].iter_mut() {
                        *f = std_normal_vec(1, &mut rng)[0];
                    }
                    Example { features, target: Target::Value(1.0) }
                })
                .collect();
            ClientShard::new(c, examples).unwrap()
        })
        .collect();
    let model = ModelSpec::LeastSquares { num_features: dim };
    let cfg = LocalTopKConfig { k, lr: 0.1, local_error: false, global_momentum: 0.0 };
    let mut sim = Simulation::new(
        model,
        shards,
        OptimizerConfig::LocalTopk(cfg),
        round_cfg(clients),
        vec![0.0; dim],
        9,
        1,
    )
    .unwrap();
    let m = sim.run_round().unwrap();
    assert_eq!(m.update_nnz as usize, clients * k);
}

#[test]
fn risk_is_weighted_by_shard_sizes() {
    let model = ModelSpec::LeastSquares { num_features: 1 };
    let shard = |id: usize, n: usize, y: f64| {
        ClientShard::new(
            id,
            (0..n)
                .map(|_| Example { features: vec![1.0], target: Target::Value(y) })
                .collect(),
        )
        .unwrap()
    };
    // w = 0: per-example loss is y^2 / 2
    let equal = vec![shard(0, 2, 2.0f64.sqrt()), shard(1, 2, 6.0f64.sqrt())];
    assert!((evaluate_risk(&model, &[0.0], &equal).unwrap() - 2.0).abs() < 1e-12);
    let skewed = vec![shard(0, 1, 8.0f64.sqrt()), shard(1, 3, 0.0)];
    assert!((evaluate_risk(&model, &[0.0], &skewed).unwrap() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Every generated example lands in exactly one shard.
    #[test]
    fn partition_covers_everything(
        classes in 2usize..6,
        per_class in 3usize..20,
        clients in 1usize..12,
        cpc in 1usize..3,
        seed in any::<u64>(),
    ) {
        let task = BlobsTask {
            num_classes: classes,
            examples_per_class: per_class,
            num_features: 2,
            center_scale: 3.0,
            spread: 1.0,
        };
        let data = task.generate(seed).unwrap();
        prop_assume!(clients * cpc <= data.len());
        match partition_noniid(&data, clients, cpc, seed) {
            Ok(shards) => {
                let total: usize = shards.iter().map(|s| s.weight()).sum();
                prop_assert_eq!(total, data.len());
                // disjointness via multiset equality of feature fingerprints
                let mut seen: Vec<u64> = shards
                    .iter()
                    .flat_map(|s| s.examples().iter().map(|e| e.features[0].to_bits()))
                    .collect();
                seen.sort_unstable();
                let mut expected: Vec<u64> =
                    data.iter().map(|e| e.features[0].to_bits()).collect();
                expected.sort_unstable();
                prop_assert_eq!(seen, expected);
            }
            Err(_) => {
                // only acceptable when some client would get an empty shard
                prop_assert!(data.len() < clients * cpc * 2);
            }
        }
    }
}
