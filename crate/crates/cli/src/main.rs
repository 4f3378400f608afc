//! `fullsub` — propensity-score weighting and subclassification from the
//! command line.

mod commands;
mod config;
mod data;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{
    cmd_analyze, cmd_diagnose, cmd_rate_study, cmd_simulate, cmd_weights, resolve_out,
};
use crate::config::{load_config, AnalyzeConfig, RateStudyConfig, SimulateConfig};
use crate::error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "fullsub",
    version,
    about = "Propensity-score weighting and subclassification estimators for average causal effects",
    after_help = "Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON configuration file for the subcommand
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed from the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: the config's `out` field, else `.`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads, 0 = automatic (env FULLSUB_THREADS is the fallback)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo replication grid and write bias/RMSE/imbalance tables
    Simulate,
    /// Estimate causal effects from a CSV dataset, optionally with bootstrap CIs
    Analyze,
    /// Export per-unit weights for each configured scheme
    Weights,
    /// Emit covariate-balance, weight-stability, and positivity diagnostics
    Diagnose,
    /// Study feasibility and error rates across subclass-count rules
    #[command(name = "rate-study")]
    RateStudy,
}

fn configure_threads(flag: Option<usize>) -> CliResult<()> {
    let threads = match flag {
        Some(n) => n,
        None => match std::env::var("FULLSUB_THREADS") {
            Ok(value) => value.parse::<usize>().map_err(|_| {
                CliError::Config(format!("FULLSUB_THREADS = '{value}' is not a thread count"))
            })?,
            Err(_) => 0,
        },
    };
    if threads > 0 {
        // A second initialization in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(())
}

fn config_path(cli: &Cli) -> CliResult<&PathBuf> {
    cli.config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))
}

fn run(cli: &Cli) -> CliResult<()> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Simulate => {
            let config: SimulateConfig = load_config(config_path(cli)?)?;
            let out = resolve_out(&cli.out, &config.out)?;
            cmd_simulate(&config, &out, cli.seed)
        }
        Command::Analyze => {
            let config: AnalyzeConfig = load_config(config_path(cli)?)?;
            let out = resolve_out(&cli.out, &config.out)?;
            cmd_analyze(&config, &out, cli.seed)
        }
        Command::Weights => {
            let config: AnalyzeConfig = load_config(config_path(cli)?)?;
            let out = resolve_out(&cli.out, &config.out)?;
            cmd_weights(&config, &out, cli.seed)
        }
        Command::Diagnose => {
            let config: AnalyzeConfig = load_config(config_path(cli)?)?;
            let out = resolve_out(&cli.out, &config.out)?;
            cmd_diagnose(&config, &out, cli.seed)
        }
        Command::RateStudy => {
            let config: RateStudyConfig = load_config(config_path(cli)?)?;
            let out = resolve_out(&cli.out, &config.out)?;
            cmd_rate_study(&config, &out, cli.seed)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("fullsub: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
