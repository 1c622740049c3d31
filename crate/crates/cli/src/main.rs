use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use spt_decomp::harness::{
    cmd_convergence, cmd_decompose, cmd_leapfrog, cmd_simulate, CommandOutcome, ExperimentConfig,
    OutputFormat,
};
use spt_decomp::Error;

#[derive(Parser)]
#[command(name = "spt-decomp", version, about = "Structural/trading decomposition of portfolio return")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate GBM capitalizations and write one CSV per seed.
    Simulate(Common),
    /// Decompose a portfolio's relative log-return on simulated or CSV data.
    Decompose(Common),
    /// Refinement study: residuals and total variations across step counts.
    Convergence(Common),
    /// Index-membership swap scenario.
    Leapfrog(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; override the config.
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Output format; overrides the config.
    #[arg(long, value_parser = parse_format)]
    format: Option<OutputFormat>,
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        // taken relative to the working directory, not the config file
        cfg.experiment.output = std::path::absolute(out).unwrap_or_else(|_| out.clone());
    }
    if let Some(seeds) = &common.seed {
        cfg.experiment.seeds = seeds.clone();
    }
    if let Some(format) = common.format {
        cfg.experiment.format = format;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<CommandOutcome, Error> {
    let (common, command): (&Common, fn(&ExperimentConfig) -> spt_decomp::Result<CommandOutcome>) =
        match &cli.command {
            Command::Simulate(c) => (c, cmd_simulate),
            Command::Decompose(c) => (c, cmd_decompose),
            Command::Convergence(c) => (c, cmd_convergence),
            Command::Leapfrog(c) => (c, cmd_leapfrog),
        };
    command(&load(common)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(outcome) => {
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            for check in &outcome.checks {
                let mark = if check.passed { "PASS" } else { "FAIL" };
                println!("[{mark}] {}: {}", check.name, check.detail);
            }
            match outcome.ensure_passed() {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    error!("{e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
