//! `netcoord`: simulate, serve, analyze, glm and extract.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error.

mod analyze;
mod config;
mod extract;
mod glm;
mod output;
mod serve;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{CliConfig, Usage};

#[derive(Debug, Parser)]
#[command(name = "netcoord", version, about = "Network coordination experiments: simulation, live runs and analysis")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, short = 'c', global = true)]
    config: Option<PathBuf>,
    /// Base seed. Drawn at random and logged when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, short = 'o', global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run seeded headless experiments with simulated agents.
    Simulate(simulate::Args),
    /// Host live runs over WebSocket.
    Serve(serve::Args),
    /// Connect simulated clients to a live run.
    Bots(serve::BotArgs),
    /// Re-derive metrics, pair tables, clusters and colormaps from run logs.
    Analyze(analyze::Args),
    /// Fit a generalized linear model to a delimited table.
    Glm(glm::Args),
    /// Extract causal claims and topic matrices from documents.
    Extract(extract::Args),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
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

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or_else(rand::random);
    log::info!("seed {seed}");
    let out = cli.out.or(file.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::Simulate(a) => simulate::run(a, file.simulate.unwrap_or_default(), seed, &out),
        Command::Serve(a) => serve::run(a, file.serve.unwrap_or_default(), seed, &out),
        Command::Bots(a) => serve::run_bots(a, seed),
        Command::Analyze(a) => analyze::run(a, &out),
        Command::Glm(a) => glm::run(a, &out),
        Command::Extract(a) => extract::run(a, &out),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Usage>() || cause.is::<toml::de::Error>() {
            return 2;
        }
        if let Some(netcoord_core::Error::InvalidConfig(_)) = cause.downcast_ref() {
            return 2;
        }
        if let Some(s) = cause.downcast_ref::<netcoord_server::ServerError>() {
            use netcoord_server::ServerError::*;
            if matches!(s, DuplicateRun(_) | BadRunId(_)) {
                return 2;
            }
        }
    }
    3
}
