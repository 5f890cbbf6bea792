//! `diffmax` command line: fit, cross-validate, generate, check and bench
//! piecewise affine regression models from a JSON config.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl From<diffmax::Error> for CliError {
    fn from(e: diffmax::Error) -> Self {
        use diffmax::Error as E;
        match e {
            E::Solver(_) | E::NonFinite { .. } | E::Infeasible(_) => CliError::Solver(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "diffmax", version, about = "Piecewise affine regression by MM with semismooth Newton subproblems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Multi-start fit; writes the best model, per-start table, trace and histogram.
    Fit(Common),
    /// K-fold prediction-error ratios against least squares over a (k1, k2) grid.
    Cv(Common),
    /// Synthetic dataset and its true model.
    Synth(Common),
    /// Stationarity of the univariate fixtures and, optionally, of a fitted model.
    Check(Common),
    /// Iteration counts and timings per dataset.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config; default ".").
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (common, run): (&Common, fn(&RunConfig, &std::path::Path) -> Result<(), CliError>) = match &cli.command {
        Command::Fit(c) => (c, commands::fit),
        Command::Cv(c) => (c, commands::cv),
        Command::Synth(c) => (c, commands::synth),
        Command::Check(c) => (c, commands::check),
        Command::Bench(c) => (c, commands::bench),
    };
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(t) = common.threads {
        cfg.threads = Some(t);
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(CliError::Config("threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let out = output::out_dir(cfg.out.as_deref().unwrap_or_else(|| std::path::Path::new(".")))?;
    run(&cfg, &out)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("diffmax: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
