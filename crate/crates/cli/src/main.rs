mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use commands::Outcome;

#[derive(Parser)]
#[command(name = "rankone", version, about = "Flat exponential sums, Riesz products and rank-one flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Directory for all outputs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; all outputs are identical for any value.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the random seed of commands that sample.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Scan q for exponential sums that are flat on a window.
    FlatSearch(Common),
    /// Accumulate a Riesz product and certify its convergence.
    Riesz(Common),
    /// Compare exact and sampled correlations of the flow.
    Flow(Common),
    /// Accumulate a planar product and classify its mass.
    Planar(Common),
    /// Return time of the linear flow on a torus.
    Torus(Common),
}

/// Loads and echoes the config, then runs the command. Configuration
/// problems map to exit code 1 like every other failure.
fn execute<T, F>(c: &Common, adjust: impl FnOnce(&mut T), f: F) -> Result<Outcome>
where
    T: DeserializeOwned + Serialize,
    F: FnOnce(&T, &Path) -> Result<Outcome>,
{
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring worker threads")?;
    }
    let mut cfg: T = config::load(&c.config)?;
    adjust(&mut cfg);
    commands::echo_config(&c.out, &cfg)?;
    f(&cfg, &c.out)
}

fn run(cli: Cli) -> Result<Outcome> {
    match &cli.command {
        Command::FlatSearch(c) => execute(c, |_| {}, commands::flat_search),
        Command::Riesz(c) => execute(c, |_| {}, commands::riesz),
        Command::Flow(c) => execute(
            c,
            |cfg: &mut config::FlowConfig| {
                if let Some(s) = c.seed {
                    cfg.seed = s;
                }
            },
            commands::flow,
        ),
        Command::Planar(c) => execute(c, |_| {}, commands::planar),
        Command::Torus(c) => execute(c, |_| {}, commands::torus),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotFound) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
