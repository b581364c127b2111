//! Deterministic federated round orchestration for all three optimizers,
//! with upload/download byte accounting.
//!
//! All randomness comes from named substreams of one master seed (client
//! sampling, local batch order), so a `(seed, config)` pair replays to
//! byte-identical metrics. Client payloads are computed in parallel;
//! aggregation and state transitions are sequential in client-id order.

use serde::{Deserialize, Serialize};

use crate::baselines::{
    fedavg_aggregate, fedavg_local_train, global_momentum_step, localtopk_client, FedAvgConfig,
    LocalTopKConfig,
};
use crate::bytes::{account_bytes, ByteConventions, Payload};
use crate::data::{sample_clients, ClientShard};
use crate::error::{Error, Result};
use crate::fetchsgd::{client_encode, server_aggregate, server_step, FetchConfig, FetchServerState};
use crate::metrics::RoundMetrics;
use crate::models::ModelSpec;
use crate::rng::substream;
use crate::sketch::CountSketch;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Weighted average of per-shard mean losses: `sum(D_i L_i) / sum(D_i)`.
pub fn evaluate_risk(model: &ModelSpec, weights: &[f64], shards: &[ClientShard]) -> Result<f64> {
    Ok(weighted_loss_and_grad(model, weights, shards)?.0)
}

/// Weighted risk and its full gradient over every shard.
pub fn weighted_loss_and_grad(
    model: &ModelSpec,
    weights: &[f64],
    shards: &[ClientShard],
) -> Result<(f64, Vec<f64>)> {
    if shards.is_empty() {
        return Err(Error::Aggregation("no shards to evaluate".into()));
    }
    let per_shard = map_clients(shards, |shard| model.loss_and_grad(weights, shard.examples()))?;
    let total: f64 = shards.iter().map(|s| s.weight() as f64).sum();
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    for (shard, (l, g)) in shards.iter().zip(&per_shard) {
        let w = shard.weight() as f64 / total;
        loss += w * l;
        for (acc, &gi) in grad.iter_mut().zip(g) {
            *acc += w * gi;
        }
    }
    Ok((loss, grad))
}

fn map_clients<T: Send, F>(shards: &[ClientShard], f: F) -> Result<Vec<T>>
where
    F: Fn(&ClientShard) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        shards.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        shards.iter().map(f).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Fetchsgd(FetchConfig),
    Fedavg(FedAvgConfig),
    LocalTopk(LocalTopKConfig),
}

impl OptimizerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerConfig::Fetchsgd(_) => "fetchsgd",
            OptimizerConfig::Fedavg(_) => "fedavg",
            OptimizerConfig::LocalTopk(_) => "local_topk",
        }
    }
}

/// Round-level knobs shared by every optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    /// Clients sampled per round (`W`).
    pub participants: usize,
    #[serde(default)]
    pub conventions: ByteConventions,
    /// Pessimistic download model: participants always fetch the dense model
    /// instead of the union of sparse updates since their last sync.
    #[serde(default)]
    pub dense_download: bool,
    /// Weight sketch aggregation by shard sizes instead of uniformly.
    #[serde(default)]
    pub weighted_aggregation: bool,
}

#[derive(Debug)]
enum OptimizerState {
    Fetch { cfg: FetchConfig, state: FetchServerState },
    FedAvg { cfg: FedAvgConfig, weights: Vec<f64> },
    LocalTopK {
        cfg: LocalTopKConfig,
        weights: Vec<f64>,
        velocity: Vec<f64>,
        client_errors: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug)]
pub struct Simulation {
    model: ModelSpec,
    shards: Vec<ClientShard>,
    optimizer: OptimizerState,
    round_cfg: RoundConfig,
    master_seed: u64,
    total_rounds: u64,
    completed: u64,
    synced_through: Vec<u64>,
    support_history: Vec<Vec<usize>>,
}

impl Simulation {
    pub fn new(
        model: ModelSpec,
        shards: Vec<ClientShard>,
        optimizer: OptimizerConfig,
        round_cfg: RoundConfig,
        initial_weights: Vec<f64>,
        master_seed: u64,
        total_rounds: u64,
    ) -> Result<Self> {
        if shards.is_empty() {
            return Err(Error::InvalidConfig("simulation needs at least one shard".into()));
        }
        if round_cfg.participants == 0 || round_cfg.participants > shards.len() {
            return Err(Error::InvalidParameter {
                name: "participants",
                reason: format!(
                    "must be in [1, {}], got {}",
                    shards.len(),
                    round_cfg.participants
                ),
            });
        }
        let dim = model.dim();
        if initial_weights.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: initial_weights.len() });
        }
        let num_clients = shards.len();
        let optimizer = match optimizer {
            OptimizerConfig::Fetchsgd(cfg) => {
                if cfg.sketch.dim != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: cfg.sketch.dim });
                }
                let state = FetchServerState::new(&cfg, initial_weights)?;
                OptimizerState::Fetch { cfg, state }
            }
            OptimizerConfig::Fedavg(cfg) => {
                cfg.validate()?;
                OptimizerState::FedAvg { cfg, weights: initial_weights }
            }
            OptimizerConfig::LocalTopk(cfg) => {
                cfg.validate(dim)?;
                let client_errors =
                    cfg.local_error.then(|| vec![vec![0.0; dim]; num_clients]);
                OptimizerState::LocalTopK {
                    cfg,
                    weights: initial_weights,
                    velocity: vec![0.0; dim],
                    client_errors,
                }
            }
        };
        Ok(Self {
            model,
            shards,
            optimizer,
            round_cfg,
            master_seed,
            total_rounds,
            completed: 0,
            synced_through: vec![0; num_clients],
            support_history: Vec::new(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        match &self.optimizer {
            OptimizerState::Fetch { state, .. } => state.weights(),
            OptimizerState::FedAvg { weights, .. } => weights,
            OptimizerState::LocalTopK { weights, .. } => weights,
        }
    }

    pub fn completed_rounds(&self) -> u64 {
        self.completed
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn shards(&self) -> &[ClientShard] {
        &self.shards
    }

    fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Bytes the sampled participants must download to sync to the current
    /// weights, under the last-sync model (or dense when configured).
    fn download_bytes(&mut self, participants: &[usize]) -> u64 {
        let dim = self.dim();
        let conv = self.round_cfg.conventions;
        let dense =
            self.round_cfg.dense_download || matches!(self.optimizer, OptimizerState::FedAvg { .. });
        let mut total = 0;
        for &c in participants {
            if dense {
                total += account_bytes(Payload::Dense { dim }, &conv);
            } else {
                let since = self.synced_through[c] as usize;
                let mut stale = vec![false; dim];
                let mut union = 0usize;
                for support in &self.support_history[since..] {
                    for &i in support {
                        if !stale[i] {
                            stale[i] = true;
                            union += 1;
                        }
                    }
                }
                total += account_bytes(Payload::Sparse { nnz: union }, &conv);
            }
            self.synced_through[c] = self.completed;
        }
        total
    }

    /// One federated round: evaluate, sample, compute payloads, aggregate,
    /// step, account bytes.
    pub fn run_round(&mut self) -> Result<RoundMetrics> {
        let round = self.completed + 1;
        let (train_loss, full_grad) =
            weighted_loss_and_grad(&self.model, self.weights(), &self.shards)?;
        let grad_norm_sq: f64 = full_grad.iter().map(|g| g * g).sum();

        let mut sample_rng = substream(self.master_seed, "client_sample", &[round]);
        let participants =
            sample_clients(self.shards.len(), self.round_cfg.participants, &mut sample_rng)?;
        let bytes_down = self.download_bytes(&participants);

        let progress = if self.total_rounds <= 1 {
            0.0
        } else {
            self.completed as f64 / (self.total_rounds - 1) as f64
        };

        let (bytes_up, update_nnz, support) = match &mut self.optimizer {
            OptimizerState::Fetch { cfg, state } => {
                let weights = state.weights().to_vec();
                let model = &self.model;
                let shards = &self.shards;
                let sketches: Vec<CountSketch> = {
                    let sketch_cfg = cfg.sketch;
                    let encode = |&id: &usize| -> Result<CountSketch> {
                        let (_, grad) =
                            model.loss_and_grad(&weights, shards[id].examples())?;
                        client_encode(&grad, &sketch_cfg)
                    };
                    #[cfg(feature = "parallel")]
                    {
                        participants.par_iter().map(encode).collect::<Result<_>>()?
                    }
                    #[cfg(not(feature = "parallel"))]
                    {
                        participants.iter().map(encode).collect::<Result<_>>()?
                    }
                };
                let agg_weights: Option<Vec<f64>> = self.round_cfg.weighted_aggregation.then(|| {
                    participants.iter().map(|&id| shards[id].weight() as f64).collect()
                });
                let aggregated = server_aggregate(&sketches, agg_weights.as_deref())?;
                let delta = server_step(state, &aggregated, cfg)?;
                let per_client = account_bytes(
                    Payload::Sketch { rows: cfg.sketch.rows, cols: cfg.sketch.cols },
                    &self.round_cfg.conventions,
                );
                let support: Vec<usize> = delta.indices().collect();
                (per_client * participants.len() as u64, delta.nnz() as u64, support)
            }
            OptimizerState::FedAvg { cfg, weights } => {
                let lr = cfg.lr_at(progress);
                let model = &self.model;
                let shards = &self.shards;
                let seed = self.master_seed;
                let w_snapshot = weights.clone();
                let local = |&id: &usize| -> Result<Vec<f64>> {
                    let mut rng = substream(seed, "local_shuffle", &[round, id as u64]);
                    fedavg_local_train(&w_snapshot, &shards[id], cfg, model, lr, &mut rng)
                };
                let deltas: Vec<Vec<f64>> = {
                    #[cfg(feature = "parallel")]
                    {
                        participants.par_iter().map(local).collect::<Result<_>>()?
                    }
                    #[cfg(not(feature = "parallel"))]
                    {
                        participants.iter().map(local).collect::<Result<_>>()?
                    }
                };
                let sizes: Vec<usize> =
                    participants.iter().map(|&id| shards[id].weight()).collect();
                let update = fedavg_aggregate(&deltas, &sizes)?;
                for (w, u) in weights.iter_mut().zip(&update) {
                    *w -= u;
                }
                let dim = update.len();
                let nnz = update.iter().filter(|&&u| u != 0.0).count() as u64;
                let per_client =
                    account_bytes(Payload::Dense { dim }, &self.round_cfg.conventions);
                (per_client * participants.len() as u64, nnz, Vec::new())
            }
            OptimizerState::LocalTopK { cfg, weights, velocity, client_errors } => {
                let model = &self.model;
                let shards = &self.shards;
                let w_snapshot = weights.clone();
                let errors_snapshot: Vec<Option<Vec<f64>>> = participants
                    .iter()
                    .map(|&id| client_errors.as_ref().map(|e| e[id].clone()))
                    .collect();
                let compress = |(&id, err): (&usize, &Option<Vec<f64>>)| {
                    let (_, grad) = model.loss_and_grad(&w_snapshot, shards[id].examples())?;
                    localtopk_client(&grad, cfg, err.as_deref())
                };
                let results: Vec<_> = {
                    #[cfg(feature = "parallel")]
                    {
                        participants
                            .par_iter()
                            .zip(errors_snapshot.par_iter())
                            .map(compress)
                            .collect::<Result<_>>()?
                    }
                    #[cfg(not(feature = "parallel"))]
                    {
                        participants
                            .iter()
                            .zip(errors_snapshot.iter())
                            .map(compress)
                            .collect::<Result<_>>()?
                    }
                };
                let mut bytes_up = 0;
                let total_weight: f64 =
                    participants.iter().map(|&id| shards[id].weight() as f64).sum();
                let mut aggregated = vec![0.0; weights.len()];
                for (&id, (update, new_state)) in participants.iter().zip(results) {
                    bytes_up += account_bytes(
                        Payload::Sparse { nnz: update.nnz() },
                        &self.round_cfg.conventions,
                    );
                    let w = shards[id].weight() as f64 / total_weight;
                    for &(i, v) in update.entries() {
                        aggregated[i] += w * v;
                    }
                    if let (Some(errors), Some(state)) = (client_errors.as_mut(), new_state) {
                        errors[id] = state;
                    }
                }
                let applied = global_momentum_step(velocity, &aggregated, cfg.global_momentum)?;
                let mut support = Vec::new();
                for (i, (w, &u)) in weights.iter_mut().zip(&applied).enumerate() {
                    if u != 0.0 {
                        *w -= cfg.lr * u;
                        support.push(i);
                    }
                }
                (bytes_up, support.len() as u64, support)
            }
        };

        self.support_history.push(support);
        self.completed = round;
        Ok(RoundMetrics { round, train_loss, grad_norm_sq, bytes_up, bytes_down, update_nnz })
    }

    pub fn run(&mut self, rounds: u64) -> Result<Vec<RoundMetrics>> {
        (0..rounds).map(|_| self.run_round()).collect()
    }
}
