//! `penex`: training, sweeps, ablations, boosting, and verification for
//! the penalized exponential loss workbench. Exit codes: 0 success, 2
//! verification failure, 1 usage or IO error.

mod commands;
mod config;
mod reports;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::{FileConfig, Overrides};

#[derive(Parser, Debug)]
#[command(name = "penex", version, about = "Penalized exponential loss workbench")]
struct Cli {
    /// Config file (.toml or .json); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for data, initialization, and shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Loss kind: penex, ex, ce, label_smoothing, confidence_penalty,
    /// focal, conex_sq_penalty, conex_aug_lagrangian, conex_hard.
    #[arg(long, global = true)]
    loss: Option<String>,
    /// Sensitivity of the exponential loss.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Boosting rounds.
    #[arg(long, global = true)]
    rounds: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train one model and write metrics.csv, margins.csv, rho.csv,
    /// summary.json, params.json.
    Train,
    /// Evaluate a stored params.json on the configured dataset.
    Eval,
    /// Train once per α value and merge the runs into sweep.csv.
    Sweep,
    /// Train the loss ablations under one seed and merge into ablate.csv.
    Ablate,
    /// Fit a stump ensemble and write boost.csv plus margin histograms.
    Boost,
    /// Run the numeric oracle suite; exits 2 if any check fails.
    Verify,
}

fn run(cli: Cli) -> Result<u8> {
    let file = match &cli.config {
        Some(path) => config::load_file(path)?,
        None => FileConfig::default(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        loss: cli.loss.as_deref().map(config::parse_loss_kind).transpose()?,
        alpha: cli.alpha,
        epochs: cli.epochs,
        rounds: cli.rounds,
    };
    let exp = config::resolve(&file, &overrides)?;
    match cli.cmd {
        Cmd::Train => {
            commands::cmd_train(&exp)?;
            Ok(0)
        }
        Cmd::Eval => {
            commands::cmd_eval(&exp)?;
            Ok(0)
        }
        Cmd::Sweep => {
            commands::cmd_sweep(&exp)?;
            Ok(0)
        }
        Cmd::Ablate => {
            commands::cmd_ablate(&exp)?;
            Ok(0)
        }
        Cmd::Boost => {
            commands::cmd_boost(&exp)?;
            Ok(0)
        }
        Cmd::Verify => {
            let passed = commands::cmd_verify(&exp.output_dir, exp.train_config.seed)?;
            Ok(if passed { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are successful exits; everything else is a
            // usage error and must exit 1, leaving 2 for verification.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
