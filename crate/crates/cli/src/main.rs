//! `solvlab` — run the solvency laboratory from a TOML config.
//!
//! Exit codes: 0 success; 2 configuration error (unparsable or invalid
//! inputs, including flag misuse); 3 numerical failure (singular designs and
//! other computation-time errors).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use solvlab::config::{RunConfig, Workers};
use solvlab::pipeline::{self, with_pool};
use solvlab_core::error::Error;

#[derive(Parser)]
#[command(
    name = "solvlab",
    about = "Nested-simulation solvency laboratory: NAV/SCR paths, polynomial proxies, \
             required-capital constraints, and proxy-efficiency experiments."
)]
struct Cli {
    /// Path to the run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the configured worker count: a positive integer or "auto".
    #[arg(long, global = true)]
    workers: Option<String>,

    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// The whole pipeline: simulate, calibrate, solve, compare.
    Run,
    /// Nested simulation only; persists paths, panel, discounts, metadata.
    Simulate,
    /// Proxy calibration from a persisted nested run.
    Calibrate {
        /// Directory holding the simulate artifacts (default: the output
        /// directory).
        #[arg(long)]
        stage_input: Option<PathBuf>,
    },
    /// Required capital from persisted paths (and proxies when present).
    Solve {
        #[arg(long)]
        stage_input: Option<PathBuf>,
    },
    /// Report assembly from persisted artifacts.
    Compare {
        #[arg(long)]
        stage_input: Option<PathBuf>,
    },
    /// The synthetic proxy-efficiency experiment from the [theory] section.
    Theory,
    /// Parse and validate the config, reporting every violation at once.
    ValidateConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    let config_path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::config("--config <path> is required".to_string()))?;
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = cli.seed {
        config.nested.seed = seed;
    }
    if let Some(workers) = &cli.workers {
        config.workers = Workers::parse(workers)?;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    let out = config.output_dir.clone();
    let workers = config.workers;

    match cli.command {
        Command::Run => {
            let report = with_pool(workers, || pipeline::run_pipeline(&config, &out))?;
            print!("{}", pipeline::render_report(&report));
        }
        Command::Simulate => {
            with_pool(workers, || pipeline::simulate_stage(&config, &out))?;
            println!("simulate: artifacts written to {}", out.display());
        }
        Command::Calibrate { stage_input } => {
            let input = stage_input.unwrap_or_else(|| out.clone());
            with_pool(workers, || pipeline::calibrate_stage(&config, &input, &out))?;
            println!("calibrate: proxy suites written to {}", out.display());
        }
        Command::Solve { stage_input } => {
            let input = stage_input.unwrap_or_else(|| out.clone());
            let artifact = with_pool(workers, || pipeline::solve_stage(&config, &input, &out))?;
            for row in &artifact.sc0 {
                println!("sc0 [{}]: holds = {}, scr0 = {}", row.source, row.holds, row.scr0);
            }
            for row in &artifact.rows {
                println!(
                    "{} p={} alpha={} [{}]: K = {}",
                    row.kind, row.p, row.alpha, row.source, row.capital_k
                );
            }
        }
        Command::Compare { stage_input } => {
            let input = stage_input.unwrap_or_else(|| out.clone());
            let report = with_pool(workers, || pipeline::compare_stage(&config, &input, &out))?;
            print!("{}", pipeline::render_report(&report));
        }
        Command::Theory => {
            let report = with_pool(workers, || pipeline::theory_stage(&config, &out))?;
            print!("{}", pipeline::render_convergence(&report));
        }
        Command::ValidateConfig => {
            println!("configuration OK: {}", config_path.display());
        }
    }
    Ok(())
}
