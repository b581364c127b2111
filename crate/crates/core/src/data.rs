//! Client shards, dataset partitioning, client sampling, and the synthetic
//! non-i.i.d. tasks used by the simulator.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[inline]
fn std_normal<R: Rng>(rng: &mut R) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

use crate::error::{Error, Result};
use crate::models::{Example, Target};
use crate::rng::substream;

/// One client's local examples. The aggregation weight `D_i` is the example
/// count; shards are nonempty by construction.
#[derive(Clone, Debug)]
pub struct ClientShard {
    pub client_id: usize,
    examples: Vec<Example>,
}

impl ClientShard {
    pub fn new(client_id: usize, examples: Vec<Example>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::InvalidData(format!("client {client_id} shard is empty")));
        }
        Ok(Self { client_id, examples })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    /// Aggregation weight `D_i`.
    pub fn weight(&self) -> usize {
        self.examples.len()
    }
}

/// Pathological non-i.i.d. partition: examples are sorted by class and cut
/// into `num_clients * classes_per_client` contiguous sub-shards, which are
/// then dealt to clients after a seeded shuffle. With balanced classes and
/// aligned sizes each client sees at most `classes_per_client` classes.
pub fn partition_noniid(
    examples: &[Example],
    num_clients: usize,
    classes_per_client: usize,
    seed: u64,
) -> Result<Vec<ClientShard>> {
    if num_clients == 0 {
        return Err(Error::Partition("need at least one client".into()));
    }
    if classes_per_client == 0 {
        return Err(Error::Partition("need at least one class per client".into()));
    }
    if num_clients > examples.len() {
        return Err(Error::Partition(format!(
            "{num_clients} clients but only {} examples",
            examples.len()
        )));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for (i, ex) in examples.iter().enumerate() {
        if ex.class().is_none() {
            return Err(Error::Partition(format!(
                "example {i} has no class label; non-i.i.d. partition needs labeled data"
            )));
        }
    }
    order.sort_by_key(|&i| (examples[i].class().expect("checked above"), i));

    let pieces = num_clients * classes_per_client;
    let base = order.len() / pieces;
    let extra = order.len() % pieces;
    let mut cuts = Vec::with_capacity(pieces + 1);
    let mut pos = 0;
    cuts.push(0);
    for p in 0..pieces {
        pos += base + usize::from(p < extra);
        cuts.push(pos);
    }

    let mut piece_ids: Vec<usize> = (0..pieces).collect();
    piece_ids.shuffle(&mut substream(seed, "partition", &[]));

    let mut shards = Vec::with_capacity(num_clients);
    for client in 0..num_clients {
        let mut local = Vec::new();
        for &piece in &piece_ids[client * classes_per_client..(client + 1) * classes_per_client] {
            for &idx in &order[cuts[piece]..cuts[piece + 1]] {
                local.push(examples[idx].clone());
            }
        }
        shards.push(ClientShard::new(client, local).map_err(|_| {
            Error::Partition(format!(
                "client {client} received an empty shard; fewer examples than sub-shards"
            ))
        })?);
    }
    Ok(shards)
}

/// Samples `w` distinct client ids uniformly without replacement.
pub fn sample_clients<R: Rng>(num_clients: usize, w: usize, rng: &mut R) -> Result<Vec<usize>> {
    if w == 0 || w > num_clients {
        return Err(Error::InvalidParameter {
            name: "w",
            reason: format!("must be in [1, {num_clients}], got {w}"),
        });
    }
    // Partial Fisher-Yates: only the first w positions are materialized draws.
    let mut ids: Vec<usize> = (0..num_clients).collect();
    for i in 0..w {
        let j = rng.gen_range(i..num_clients);
        ids.swap(i, j);
    }
    ids.truncate(w);
    Ok(ids)
}

/// Synthetic non-i.i.d. least squares: client `i` draws features around a
/// client-specific Gaussian mean, labels come from one shared true weight
/// vector plus observation noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeastSquaresTask {
    pub num_clients: usize,
    pub examples_per_client: usize,
    pub num_features: usize,
    #[serde(default = "default_one")]
    pub mean_scale: f64,
    #[serde(default = "default_one")]
    pub feature_noise: f64,
    #[serde(default = "default_label_noise")]
    pub label_noise: f64,
}

fn default_one() -> f64 {
    1.0
}

fn default_label_noise() -> f64 {
    0.01
}

impl LeastSquaresTask {
    /// Generates all shards plus the shared true weight vector.
    pub fn generate(&self, master_seed: u64) -> Result<(Vec<ClientShard>, Vec<f64>)> {
        if self.num_clients == 0 || self.examples_per_client == 0 || self.num_features == 0 {
            return Err(Error::InvalidConfig(
                "least squares task needs positive clients, examples, features".into(),
            ));
        }
        let d = self.num_features;
        let scale = 1.0 / (d as f64).sqrt();
        let mut rng = substream(master_seed, "true_weights", &[]);
        let true_w: Vec<f64> =
            (0..d).map(|_| scale * std_normal(&mut rng)).collect();

        let mut shards = Vec::with_capacity(self.num_clients);
        for client in 0..self.num_clients {
            let mut mean_rng = substream(master_seed, "client_mean", &[client as u64]);
            let mean: Vec<f64> = (0..d)
                .map(|_| self.mean_scale * std_normal(&mut mean_rng))
                .collect();
            let mut ex_rng = substream(master_seed, "client_examples", &[client as u64]);
            let examples = (0..self.examples_per_client)
                .map(|_| {
                    let features: Vec<f64> = mean
                        .iter()
                        .map(|&m| m + self.feature_noise * std_normal(&mut ex_rng))
                        .collect();
                    let noise: f64 = std_normal(&mut ex_rng);
                    let y = features.iter().zip(&true_w).map(|(x, w)| x * w).sum::<f64>()
                        + self.label_noise * noise;
                    Example { features, target: Target::Value(y) }
                })
                .collect();
            shards.push(ClientShard::new(client, examples)?);
        }
        Ok((shards, true_w))
    }
}

/// Balanced Gaussian-blob classification data: one spherical cluster per
/// class, labels by cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobsTask {
    pub num_classes: usize,
    pub examples_per_class: usize,
    pub num_features: usize,
    #[serde(default = "default_center_scale")]
    pub center_scale: f64,
    #[serde(default = "default_one")]
    pub spread: f64,
}

fn default_center_scale() -> f64 {
    3.0
}

impl BlobsTask {
    pub fn generate(&self, master_seed: u64) -> Result<Vec<Example>> {
        if self.num_classes == 0 || self.examples_per_class == 0 || self.num_features == 0 {
            return Err(Error::InvalidConfig(
                "blobs task needs positive classes, examples, features".into(),
            ));
        }
        let mut out = Vec::with_capacity(self.num_classes * self.examples_per_class);
        for class in 0..self.num_classes {
            let mut center_rng = substream(master_seed, "blob_center", &[class as u64]);
            let center: Vec<f64> = (0..self.num_features)
                .map(|_| self.center_scale * std_normal(&mut center_rng))
                .collect();
            let mut ex_rng = substream(master_seed, "blob_examples", &[class as u64]);
            for _ in 0..self.examples_per_class {
                let features = center
                    .iter()
                    .map(|&c| c + self.spread * std_normal(&mut ex_rng))
                    .collect();
                out.push(Example { features, target: Target::Class(class) });
            }
        }
        Ok(out)
    }
}
