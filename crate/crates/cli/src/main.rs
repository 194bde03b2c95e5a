//! `epicount`: fit, forecast, score and simulate endemic-epidemic count
//! models from a TOML run configuration.

mod commands;
mod config;
mod error;

use clap::{Parser, Subcommand};
use config::{Format, RunConfig};
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "epicount",
    version,
    about = "Endemic-epidemic models for surveillance counts"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for parallel refits and permutations.
    #[arg(long, global = true, env = "EPICOUNT_THREADS")]
    threads: Option<usize>,

    /// Layout of the counts file; overrides `data.format`.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the neighbourhood-order matrix of the adjacency.
    Orders {
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Fit the configured model by maximum likelihood.
    Fit {
        /// Fit document (JSON).
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the fitted weight matrix (rows are sources).
        #[arg(long)]
        weights_out: Option<PathBuf>,
        /// Exit with 0 even when the optimizer did not converge.
        #[arg(long)]
        allow_nonconverged: bool,
    },
    /// Rolling one-step-ahead predictions with their scores.
    Predict {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        allow_nonconverged: bool,
    },
    /// Mean scores of one predictions file, or of two aligned ones.
    Score {
        #[arg(required = true, num_args = 1..=2)]
        predictions: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Paired permutation test of two score files.
    Test {
        a: PathBuf,
        b: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Overrides `test.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `test.permutations`.
        #[arg(long)]
        permutations: Option<usize>,
    },
    /// Simulate forward from a fitted model.
    Simulate {
        /// Fit document written by `fit`.
        #[arg(long)]
        fit: PathBuf,
        /// Simulated paths (CSV, long form).
        #[arg(short, long)]
        out: PathBuf,
        /// Final sizes and aggregated means (JSON).
        #[arg(long)]
        summary: PathBuf,
        /// Overrides `simulate.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// PIT histogram of a predictions file.
    Pit {
        predictions: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Overrides `pit.bins`.
        #[arg(long)]
        bins: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot set up {n} threads: {e}")))?;
    }
    let path = cli
        .config
        .ok_or_else(|| CliError::Input("a run configuration is required (--config)".into()))?;
    let cfg = RunConfig::load(&path)?;
    let fmt = cli.format;
    match cli.command {
        Command::Orders { out } => commands::orders(&cfg, fmt, &out),
        Command::Fit {
            out,
            weights_out,
            allow_nonconverged,
        } => commands::fit(&cfg, fmt, &out, weights_out.as_deref(), allow_nonconverged),
        Command::Predict {
            out,
            allow_nonconverged,
        } => commands::predict(&cfg, fmt, &out, allow_nonconverged),
        Command::Score { predictions, out } => commands::score(&cfg, fmt, &predictions, &out),
        Command::Test {
            a,
            b,
            out,
            seed,
            permutations,
        } => commands::test(&cfg, fmt, &a, &b, &out, seed, permutations),
        Command::Simulate {
            fit,
            out,
            summary,
            seed,
        } => commands::simulate(&cfg, fmt, &fit, &out, &summary, seed),
        Command::Pit {
            predictions,
            out,
            bins,
        } => commands::pit(&cfg, fmt, &predictions, &out, bins),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
