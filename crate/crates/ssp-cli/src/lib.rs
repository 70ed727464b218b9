//! Command-line runner for the spectral propagation workspace.
//!
//! One binary, `ssp`, five subcommands — `gen`, `train`, `eval`, `gradcheck`,
//! `ablate` — all driven by a single strict TOML config file (see
//! [`config::RunConfig`]). Every run locks its output directory, echoes the
//! effective configuration there, and is bitwise-reproducible from that echo
//! (wall-clock columns aside).
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical divergence
//! (including a failed gradient check), 4 IO or file-format error.

pub mod commands;
pub mod config;
pub mod lock;
pub mod plot;
pub mod probes;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use ssp_core::{Error, Result};

pub use config::RunConfig;

/// Spectral propagator runner: datasets, training, evaluation, ablations,
/// and gradient checks from one config file.
#[derive(Debug, Parser)]
#[command(name = "ssp", version, about)]
pub struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Upper bound on worker threads. Accepted for interface stability; the
    /// numerics run sequentially so results never depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset from the [pde] and [data] sections.
    Gen,
    /// Train (or resume) from the [train] section.
    Train,
    /// Evaluate a checkpoint per the [eval] section.
    Eval,
    /// Verify the adjoint gradients of the full objective.
    Gradcheck,
    /// Train and compare the standard ablation variants.
    Ablate,
}

/// Loads the config, applies overrides, locks the output directory, echoes
/// the effective configuration, and dispatches.
pub fn run(cli: &Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::config("--threads must be at least 1"));
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config PATH is required"))?;
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    config.validate()?;

    let _lock = lock::DirLock::acquire(&config.out)?;
    std::fs::write(config.out.join("effective_config.toml"), config.echo()?)?;

    match cli.command {
        Command::Gen => commands::cmd_gen(&config),
        Command::Train => commands::cmd_train(&config).map(|_| ()),
        Command::Eval => commands::cmd_eval(&config).map(|_| ()),
        Command::Gradcheck => commands::cmd_gradcheck(&config).map(|_| ()),
        Command::Ablate => commands::cmd_ablate(&config).map(|_| ()),
    }
}

/// Maps the shared error classification onto the documented exit codes.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Divergence(_) => 3,
        Error::Format(_) | Error::Io(_) => 4,
    }
}
