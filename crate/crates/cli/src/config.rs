//! Experiment configuration: a single JSON document with one block per
//! subsystem. Unknown keys are errors everywhere, so typos in sweep grids
//! fail fast.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use fetchsim_core::baselines::{FedAvgConfig, LocalTopKConfig, LrSchedule};
use fetchsim_core::bytes::{ByteConventions, SketchBytes, SparseBytes};
use fetchsim_core::data::{partition_noniid, BlobsTask, ClientShard, LeastSquaresTask};
use fetchsim_core::fetchsgd::{ErrorMode, ErrorStructure, FetchConfig};
use fetchsim_core::models::ModelSpec;
use fetchsim_core::rng::{derive_seed, substream};
use fetchsim_core::sim::{OptimizerConfig, RoundConfig};
use fetchsim_core::sketch::SketchConfig;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    pub rounds: u64,
    pub participants: usize,
    pub model: ModelBlock,
    pub dataset: DatasetBlock,
    pub optimizer: OptimizerBlock,
    #[serde(default)]
    pub init: InitBlock,
    #[serde(default)]
    pub accounting: AccountingBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelBlock {
    /// Linear regression with squared loss; dimensions from the dataset.
    LeastSquares,
    /// Multinomial logistic regression; dimensions from the dataset.
    Logistic,
    /// Two-layer perceptron with the given hidden width.
    Mlp { hidden: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetBlock {
    LeastSquares {
        num_clients: usize,
        examples_per_client: usize,
        num_features: usize,
        #[serde(default = "default_one")]
        mean_scale: f64,
        #[serde(default = "default_one")]
        feature_noise: f64,
        #[serde(default = "default_label_noise")]
        label_noise: f64,
    },
    Blobs {
        num_classes: usize,
        examples_per_class: usize,
        num_features: usize,
        num_clients: usize,
        classes_per_client: usize,
        #[serde(default = "default_center_scale")]
        center_scale: f64,
        #[serde(default = "default_one")]
        spread: f64,
    },
}

fn default_one() -> f64 {
    1.0
}

fn default_label_noise() -> f64 {
    0.01
}

fn default_center_scale() -> f64 {
    3.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitBlock {
    #[default]
    Zeros,
    Normal { scale: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccountingBlock {
    pub sparse: SparseBytes,
    pub sketch: SketchBytes,
    pub dense_download: bool,
    pub weighted_aggregation: bool,
}

/// Sketch shape on the wire config; the ambient dimension comes from the
/// model, and a missing seed is derived from the master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchBlock {
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerBlock {
    Fetchsgd {
        eta: f64,
        rho: f64,
        k: usize,
        sketch: SketchBlock,
        #[serde(default)]
        error_mode: ErrorMode,
        #[serde(default = "default_true")]
        momentum_masking: bool,
        #[serde(default)]
        error_structure: ErrorStructure,
    },
    Fedavg {
        local_epochs: f64,
        local_batch: usize,
        local_lr: f64,
        #[serde(default = "default_one")]
        global_epochs_fraction: f64,
        #[serde(default)]
        lr_schedule: Option<LrSchedule>,
    },
    LocalTopk {
        k: usize,
        lr: f64,
        #[serde(default)]
        local_error: bool,
        #[serde(default)]
        global_momentum: f64,
    },
}

fn default_true() -> bool {
    true
}

/// Everything `run` needs, materialized from a config.
#[derive(Debug)]
pub struct BuiltExperiment {
    pub model: ModelSpec,
    pub shards: Vec<ClientShard>,
    pub optimizer: OptimizerConfig,
    pub round_cfg: RoundConfig,
    pub initial_weights: Vec<f64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).context("config does not parse")?;
        Ok(cfg)
    }

    /// Builds dataset, model, and optimizer, validating cross-field
    /// constraints with diagnostics that name the offending field.
    pub fn build(&self) -> anyhow::Result<BuiltExperiment> {
        let shards = self.build_shards()?;
        if self.participants == 0 || self.participants > shards.len() {
            bail!(
                "field `participants`: must be in [1, {}], got {}",
                shards.len(),
                self.participants
            );
        }
        let model = self.build_model()?;
        let dim = model.dim();
        let optimizer = self.build_optimizer(dim)?;
        let initial_weights = match self.init {
            InitBlock::Zeros => vec![0.0; dim],
            InitBlock::Normal { scale } => {
                let mut rng = substream(self.seed, "init_weights", &[]);
                (0..dim)
                    .map(|_| {
                        scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                    })
                    .collect()
            }
        };
        let round_cfg = RoundConfig {
            participants: self.participants,
            conventions: ByteConventions {
                sparse: self.accounting.sparse,
                sketch: self.accounting.sketch,
            },
            dense_download: self.accounting.dense_download,
            weighted_aggregation: self.accounting.weighted_aggregation,
        };
        Ok(BuiltExperiment { model, shards, optimizer, round_cfg, initial_weights })
    }

    fn build_shards(&self) -> anyhow::Result<Vec<ClientShard>> {
        match &self.dataset {
            DatasetBlock::LeastSquares {
                num_clients,
                examples_per_client,
                num_features,
                mean_scale,
                feature_noise,
                label_noise,
            } => {
                let task = LeastSquaresTask {
                    num_clients: *num_clients,
                    examples_per_client: *examples_per_client,
                    num_features: *num_features,
                    mean_scale: *mean_scale,
                    feature_noise: *feature_noise,
                    label_noise: *label_noise,
                };
                let (shards, _) = task
                    .generate(derive_seed(self.seed, "dataset", &[]))
                    .context("field `dataset`")?;
                Ok(shards)
            }
            DatasetBlock::Blobs {
                num_classes,
                examples_per_class,
                num_features,
                num_clients,
                classes_per_client,
                center_scale,
                spread,
            } => {
                let task = BlobsTask {
                    num_classes: *num_classes,
                    examples_per_class: *examples_per_class,
                    num_features: *num_features,
                    center_scale: *center_scale,
                    spread: *spread,
                };
                let data = task
                    .generate(derive_seed(self.seed, "dataset", &[]))
                    .context("field `dataset`")?;
                let shards = partition_noniid(
                    &data,
                    *num_clients,
                    *classes_per_client,
                    derive_seed(self.seed, "partition", &[]),
                )
                .context("field `dataset.num_clients`/`classes_per_client`")?;
                Ok(shards)
            }
        }
    }

    fn build_model(&self) -> anyhow::Result<ModelSpec> {
        match (&self.model, &self.dataset) {
            (ModelBlock::LeastSquares, DatasetBlock::LeastSquares { num_features, .. }) => {
                Ok(ModelSpec::LeastSquares { num_features: *num_features })
            }
            (ModelBlock::Logistic, DatasetBlock::Blobs { num_features, num_classes, .. }) => {
                Ok(ModelSpec::Logistic {
                    num_features: *num_features,
                    num_classes: *num_classes,
                })
            }
            (ModelBlock::Mlp { hidden }, DatasetBlock::Blobs { num_features, num_classes, .. }) => {
                if *hidden == 0 {
                    bail!("field `model.hidden`: must be >= 1");
                }
                Ok(ModelSpec::Mlp {
                    num_features: *num_features,
                    hidden: *hidden,
                    num_classes: *num_classes,
                })
            }
            (ModelBlock::LeastSquares, _) => {
                bail!("field `model`: least_squares requires a least_squares dataset")
            }
            (_, DatasetBlock::LeastSquares { .. }) => {
                bail!("field `model`: classifiers require a blobs dataset")
            }
        }
    }

    fn build_optimizer(&self, dim: usize) -> anyhow::Result<OptimizerConfig> {
        match &self.optimizer {
            OptimizerBlock::Fetchsgd {
                eta,
                rho,
                k,
                sketch,
                error_mode,
                momentum_masking,
                error_structure,
            } => {
                let seed = sketch.seed.unwrap_or_else(|| derive_seed(self.seed, "sketch", &[]));
                let sketch_cfg = SketchConfig::new(sketch.rows, sketch.cols, dim, seed)
                    .map_err(|e| anyhow::anyhow!("field `optimizer.sketch`: {e}"))?;
                let cfg = FetchConfig {
                    eta: *eta,
                    rho: *rho,
                    k: *k,
                    sketch: sketch_cfg,
                    error_mode: *error_mode,
                    momentum_masking: *momentum_masking,
                    error_structure: *error_structure,
                };
                cfg.validate().map_err(|e| anyhow::anyhow!("field `optimizer`: {e}"))?;
                Ok(OptimizerConfig::Fetchsgd(cfg))
            }
            OptimizerBlock::Fedavg {
                local_epochs,
                local_batch,
                local_lr,
                global_epochs_fraction,
                lr_schedule,
            } => {
                let cfg = FedAvgConfig {
                    local_epochs: *local_epochs,
                    local_batch: *local_batch,
                    local_lr: *local_lr,
                    global_epochs_fraction: *global_epochs_fraction,
                    lr_schedule: *lr_schedule,
                };
                cfg.validate().map_err(|e| anyhow::anyhow!("field `optimizer`: {e}"))?;
                Ok(OptimizerConfig::Fedavg(cfg))
            }
            OptimizerBlock::LocalTopk { k, lr, local_error, global_momentum } => {
                let cfg = LocalTopKConfig {
                    k: *k,
                    lr: *lr,
                    local_error: *local_error,
                    global_momentum: *global_momentum,
                };
                cfg.validate(dim).map_err(|e| anyhow::anyhow!("field `optimizer`: {e}"))?;
                Ok(OptimizerConfig::LocalTopk(cfg))
            }
        }
    }

    /// FedAvg compresses by running fewer rounds; everything else runs the
    /// full budget.
    pub fn effective_rounds(&self) -> u64 {
        match &self.optimizer {
            OptimizerBlock::Fedavg { global_epochs_fraction, .. } => {
                ((self.rounds as f64) * global_epochs_fraction).round().max(0.0) as u64
            }
            _ => self.rounds,
        }
    }

    pub fn optimizer_name(&self) -> &'static str {
        match self.optimizer {
            OptimizerBlock::Fetchsgd { .. } => "fetchsgd",
            OptimizerBlock::Fedavg { .. } => "fedavg",
            OptimizerBlock::LocalTopk { .. } => "local_topk",
        }
    }
}
