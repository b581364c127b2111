//! `fetchsim`: runs federated-compression experiments from JSON configs.

mod config;
mod runner;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "fetchsim", about = "Federated gradient-compression simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment config; writes metrics.csv and summary.txt.
    Run {
        /// Path to a JSON experiment config.
        config: PathBuf,
        /// Output directory (default: `<config stem>_out` next to the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every config matching a glob; writes per-run outputs plus sweep.csv.
    Sweep {
        /// Glob over config paths, e.g. `configs/*.json`.
        pattern: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { config, out, seed } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = ExperimentConfig::parse(&text)
                .with_context(|| format!("parsing {}", config.display()))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let out_dir = out.unwrap_or_else(|| default_out_dir(&config));
            let summary = runner::run_experiment(&cfg, &out_dir)?;
            print!("{}", summary.render());
            println!("outputs={}", out_dir.display());
            Ok(())
        }
        Command::Sweep { pattern, out } => {
            let rows = runner::sweep(&pattern, &out)?;
            fs::create_dir_all(&out)?;
            let table = runner::render_sweep_csv(&rows);
            fs::write(out.join("sweep.csv"), &table)?;
            print!("{table}");
            let failures = rows.iter().filter(|r| r.outcome.is_err()).count();
            if failures > 0 {
                eprintln!("{failures} of {} runs failed; see sweep.csv", rows.len());
            }
            Ok(())
        }
    }
}

fn default_out_dir(config: &std::path::Path) -> PathBuf {
    let stem = config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    config.with_file_name(format!("{stem}_out"))
}
