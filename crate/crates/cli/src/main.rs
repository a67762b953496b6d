//! Command-line surface for the chain library: simulation, closed-form
//! curves and envelope validation, driven by JSON experiment configurations.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 for numeric or
//! existence failures inside the library.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "ppchain",
    version,
    about = "Markov chains of cluster point processes: simulation, exact pair correlations, envelope tests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw replicate patterns and write one CSV per replicate.
    Simulate(RunArgs),
    /// Write closed-form pair correlation curves and mixture kernels.
    Theory(RunArgs),
    /// Rank-envelope test of simulated output against a Poisson null.
    Validate(RunArgs),
    /// List built-in presets, or print one as JSON.
    Presets {
        /// Preset to print; lists all names when omitted.
        name: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (JSON).
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name (see `presets`).
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores. Never changes any result.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        match (&self.config, &self.preset) {
            (Some(path), None) => ExperimentConfig::from_path(path),
            (None, Some(name)) => ExperimentConfig::from_preset(name),
            _ => Err(CliError::Config(
                "exactly one of --config and --preset is required".into(),
            )),
        }
    }

    fn init_threads(&self) -> Result<(), CliError> {
        if self.threads > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(self.threads)
                .build_global()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        }
        Ok(())
    }

    fn seed_for(&self, cfg: &ExperimentConfig) -> u64 {
        self.seed.unwrap_or(cfg.seed)
    }
}

fn run() -> Result<(), CliError> {
    match Cli::parse().command {
        Command::Simulate(args) => {
            let cfg = args.load()?;
            args.init_threads()?;
            commands::cmd_simulate(&cfg, args.seed_for(&cfg), &args.out)
        }
        Command::Theory(args) => {
            let cfg = args.load()?;
            args.init_threads()?;
            commands::cmd_theory(&cfg, &args.out)
        }
        Command::Validate(args) => {
            let cfg = args.load()?;
            args.init_threads()?;
            commands::cmd_validate(&cfg, args.seed_for(&cfg), &args.out)
        }
        Command::Presets { name } => commands::cmd_presets(name.as_deref()),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
