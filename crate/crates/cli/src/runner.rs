//! Executes experiments: one run writes `metrics.csv` and `summary.txt`;
//! a sweep runs many configs and tabulates results with a Pareto column.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;

use fetchsim_core::bytes::{account_bytes, Payload};
use fetchsim_core::metrics::{format_float, write_csv, RoundMetrics};
use fetchsim_core::sim::{evaluate_risk, Simulation};

use crate::config::ExperimentConfig;

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub name: String,
    pub optimizer: String,
    pub rounds: u64,
    pub dim: usize,
    pub final_train_loss: f64,
    pub min_grad_norm_sq: Option<f64>,
    pub total_bytes_up: u64,
    pub total_bytes_down: u64,
    pub baseline_bytes: u64,
    pub upload_compression: Option<f64>,
    pub download_compression: Option<f64>,
    pub overall_compression: Option<f64>,
}

impl RunSummary {
    /// Flat key-value rendering, one `key=value` per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("name", self.name.clone());
        kv("optimizer", self.optimizer.clone());
        kv("rounds", self.rounds.to_string());
        kv("dim", self.dim.to_string());
        kv("final_train_loss", format_float(self.final_train_loss));
        if let Some(g) = self.min_grad_norm_sq {
            kv("min_grad_norm_sq", format_float(g));
        }
        kv("total_bytes_up", self.total_bytes_up.to_string());
        kv("total_bytes_down", self.total_bytes_down.to_string());
        kv("baseline_bytes_up", self.baseline_bytes.to_string());
        kv("baseline_bytes_down", self.baseline_bytes.to_string());
        if let Some(c) = self.upload_compression {
            kv("upload_compression", format_float(c));
        }
        if let Some(c) = self.download_compression {
            kv("download_compression", format_float(c));
        }
        if let Some(c) = self.overall_compression {
            kv("overall_compression", format_float(c));
        }
        out
    }
}

/// Runs one experiment, writing `metrics.csv` and `summary.txt` under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<RunSummary> {
    let built = cfg.build()?;
    let rounds = cfg.effective_rounds();
    let dim = built.model.dim();
    let mut sim = Simulation::new(
        built.model,
        built.shards,
        built.optimizer,
        built.round_cfg,
        built.initial_weights,
        cfg.seed,
        rounds,
    )
    .map_err(|e| anyhow::anyhow!("{e}"))?;

    let metrics = sim.run(rounds).map_err(|e| anyhow::anyhow!("{e}"))?;

    let final_train_loss =
        evaluate_risk(sim.model(), sim.weights(), sim.shards()).map_err(|e| anyhow::anyhow!("{e}"))?;
    let summary = summarize(cfg, dim, rounds, final_train_loss, &metrics);

    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    write_csv(&out_dir.join("metrics.csv"), &metrics).map_err(|e| anyhow::anyhow!("{e}"))?;
    fs::write(out_dir.join("summary.txt"), summary.render())
        .with_context(|| format!("writing summary under {}", out_dir.display()))?;
    Ok(summary)
}

fn summarize(
    cfg: &ExperimentConfig,
    dim: usize,
    rounds: u64,
    final_train_loss: f64,
    metrics: &[RoundMetrics],
) -> RunSummary {
    let total_bytes_up: u64 = metrics.iter().map(|m| m.bytes_up).sum();
    let total_bytes_down: u64 = metrics.iter().map(|m| m.bytes_down).sum();
    // dense-SGD baseline: every participant uploads and downloads the dense
    // model every round, for the full (uncompressed) round budget
    let baseline_bytes = cfg.rounds
        * cfg.participants as u64
        * account_bytes(Payload::Dense { dim }, &Default::default());
    let ratio = |actual: u64| {
        (rounds > 0 && actual > 0).then(|| baseline_bytes as f64 / actual as f64)
    };
    RunSummary {
        name: cfg.name.clone().unwrap_or_else(|| "unnamed".into()),
        optimizer: cfg.optimizer_name().to_string(),
        rounds,
        dim,
        final_train_loss,
        min_grad_norm_sq: (rounds > 0)
            .then(|| metrics.iter().map(|m| m.grad_norm_sq).fold(f64::INFINITY, f64::min)),
        total_bytes_up,
        total_bytes_down,
        baseline_bytes,
        upload_compression: ratio(total_bytes_up),
        download_compression: ratio(total_bytes_down),
        overall_compression: (rounds > 0 && total_bytes_up + total_bytes_down > 0).then(|| {
            2.0 * baseline_bytes as f64 / (total_bytes_up + total_bytes_down) as f64
        }),
    }
}

pub struct SweepRow {
    pub config_path: PathBuf,
    pub outcome: anyhow::Result<RunSummary>,
    pub pareto: bool,
}

/// Runs every config matching the glob, in parallel, and marks the rows not
/// dominated in (quality, overall compression). Per-config failures are
/// recorded, not fatal.
pub fn sweep(pattern: &str, out_dir: &Path) -> anyhow::Result<Vec<SweepRow>> {
    let mut paths: Vec<PathBuf> = glob::glob(pattern)
        .context("invalid config glob")?
        .filter_map(|entry| entry.ok())
        .collect();
    paths.sort();
    if paths.is_empty() {
        anyhow::bail!("no configs match `{pattern}`");
    }

    let outcomes: Vec<anyhow::Result<RunSummary>> = paths
        .par_iter()
        .map(|path| {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let cfg = ExperimentConfig::parse(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "config".into());
            run_experiment(&cfg, &out_dir.join(stem))
        })
        .collect();

    // Pareto dominance over successful rows: maximize quality (negative
    // final loss) and overall compression.
    let points: Vec<Option<(f64, f64)>> = outcomes
        .iter()
        .map(|o| {
            o.as_ref()
                .ok()
                .map(|s| (-s.final_train_loss, s.overall_compression.unwrap_or(0.0)))
        })
        .collect();
    let flags = pareto_flags(&points);

    Ok(paths
        .into_iter()
        .zip(outcomes)
        .zip(flags)
        .map(|((config_path, outcome), pareto)| SweepRow { config_path, outcome, pareto })
        .collect())
}

/// `None` entries (failed runs) are never Pareto-optimal.
pub fn pareto_flags(points: &[Option<(f64, f64)>]) -> Vec<bool> {
    points
        .iter()
        .map(|candidate| match candidate {
            None => false,
            Some((m, c)) => !points.iter().flatten().any(|(om, oc)| {
                (om >= m && oc >= c) && (om > m || oc > c)
            }),
        })
        .collect()
}

pub fn render_sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "config,status,final_train_loss,min_grad_norm_sq,upload_compression,download_compression,overall_compression,pareto\n",
    );
    for row in rows {
        let config = row.config_path.display();
        match &row.outcome {
            Ok(s) => {
                let opt = |v: Option<f64>| v.map_or(String::new(), format_float);
                out.push_str(&format!(
                    "{config},ok,{},{},{},{},{},{}\n",
                    format_float(s.final_train_loss),
                    opt(s.min_grad_norm_sq),
                    opt(s.upload_compression),
                    opt(s.download_compression),
                    opt(s.overall_compression),
                    row.pareto
                ));
            }
            Err(e) => {
                let msg = format!("{e:#}").replace([',', '\n'], ";");
                out.push_str(&format!("{config},error: {msg},,,,,,false\n"));
            }
        }
    }
    out
}
