mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::Suite;
use config::Config;

/// Strong-approximation laboratory for scalar SDEs.
#[derive(Debug, Parser)]
#[command(name = "sdelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for JSON, CSV and plot data.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the resolved plan without sampling.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the hypotheses of the lower-bound theorems.
    Classify {
        /// Config file or packaged config name.
        #[arg(long)]
        config: String,
    },
    /// Run a rate experiment.
    Rates {
        #[arg(long)]
        config: String,
    },
    /// Run invariant suites with fixed seeds.
    Verify {
        /// Suites to run; all when omitted.
        #[arg(value_enum)]
        suites: Vec<Suite>,
    },
    /// List packaged configs.
    Configs,
}

fn load(source: &str, seed: Option<u64>) -> Result<Config> {
    let mut c = Config::load(source)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global()?;
    }
    let out = cli.out.as_deref();
    match cli.command {
        Command::Classify { config } => commands::classify(&load(&config, cli.seed)?, out, cli.dry_run),
        Command::Rates { config } => commands::rates(&load(&config, cli.seed)?, out, cli.dry_run),
        Command::Verify { suites } => {
            let suites = if suites.is_empty() {
                vec![Suite::Identities, Suite::Coupling, Suite::Gaussian, Suite::Oracle]
            } else {
                suites
            };
            if cli.dry_run {
                println!("verify {suites:?} with seed {}", cli.seed.unwrap_or(0));
                return Ok(true);
            }
            commands::verify(&suites, cli.seed.unwrap_or(0), out)
        }
        Command::Configs => {
            for name in config::packaged_names() {
                println!("{name}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
