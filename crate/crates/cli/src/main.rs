//! `ssoftmax`: data generation, training, evaluation, attacks, fusion and
//! gradient checks for Score-Softmax classifiers.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical abort.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{ExperimentConfig, FusionMethod};

#[derive(Debug, Parser)]
#[command(name = "ssoftmax", version, about = "Score-Softmax experiments")]
pub struct Cli {
    /// Experiment config (JSON). Defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the train and dataset seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Parallel processes when fanning out over seeds.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate (or convert) the train and test splits.
    GenData,
    /// Train a model and write a checkpoint and a training log.
    Train {
        /// Directory holding train.ssds (and optionally test.ssds).
        /// The config's dataset section is generated when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop once this many epochs have completed.
        #[arg(long)]
        stop_after: Option<usize>,
        /// Run one process per seed, `--jobs` at a time, into `<out>/seed-<s>`.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Measure accuracy under impulse noise and background attacks.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Split whose feature ranges define the impulse extremes
        /// (defaults to the attacked data).
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Impulse probabilities; overrides the config.
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        /// Background token class; overrides the config.
        #[arg(long)]
        token: Option<usize>,
    },
    /// Fuse score dumps from several branches.
    Fuse {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<FusionMethod>,
        #[arg(long)]
        target_g: Option<usize>,
    },
    /// Run the finite-difference gradient suite.
    GradCheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        /// Corrupt the relu backward rule; the suite must then fail.
        #[arg(long)]
        negative_control: bool,
    },
}

/// Raised when the gradient suite finds a mismatch.
#[derive(Debug, thiserror::Error)]
#[error("gradient check failed: {0}")]
pub struct GradCheckFailed(String);

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ssoftmax_core::Error>() {
            if e.is_numerical() {
                return 2;
            }
        }
        if cause.downcast_ref::<GradCheckFailed>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::load(cli.config.as_deref())?.with_seed(cli.seed);
    std::fs::create_dir_all(&cli.out)?;
    let ctx = commands::Context {
        cfg,
        out: cli.out.clone(),
        config_path: cli.config.clone(),
    };
    match cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::Train {
            data,
            resume,
            stop_after,
            seeds,
        } => {
            if seeds.is_empty() {
                commands::train(&ctx, data.as_deref(), resume.as_deref(), stop_after)
            } else {
                commands::fan_out(&ctx, &seeds, cli.jobs, data.as_deref(), stop_after)
            }
        }
        Command::Eval { model, data } => commands::eval(&ctx, &model, &data),
        Command::Attack {
            model,
            data,
            reference,
            p,
            token,
        } => commands::attack(&ctx, &model, &data, reference.as_deref(), p, token),
        Command::Fuse {
            inputs,
            method,
            target_g,
        } => commands::fuse(&ctx, &inputs, method, target_g),
        Command::GradCheck {
            instances,
            negative_control,
        } => commands::grad_check(&ctx, instances, negative_control),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
