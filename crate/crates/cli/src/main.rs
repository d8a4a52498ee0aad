//! nhdiff: simulate stochastically perturbed non-holonomic systems,
//! sample their Chaplygin drift, test for preserved measures, plan the
//! noisy-robot trajectory and reconstruct snakeboard means.
//!
//! Exit codes: 0 ok, 2 config error, 3 all paths failed, 4 numerical
//! verdict unavailable (grid too coarse).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "nhdiff", version, about = "non-holonomic diffusion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct CommonArgs {
    /// run configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// path count override
    #[arg(long)]
    paths: Option<usize>,
    /// time step override (grid steps are recomputed)
    #[arg(long)]
    dt: Option<f64>,
    /// final time override
    #[arg(long)]
    t_final: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the constrained-Brownian-motion ensemble
    Simulate(CommonArgs),
    /// Sample the drift one-form β and drift vector b on the shape space
    Drift(CommonArgs),
    /// Decide preserved-measure / time-reversibility of the reduced system
    MeasureTest {
        #[command(flatten)]
        common: CommonArgs,
        /// shape-grid resolution override
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Mean trajectory of the circle-following robot with noisy wheels
    Plan {
        #[command(flatten)]
        common: CommonArgs,
        /// use the printed e^{κt} factor instead of e^{κs}
        #[arg(long)]
        paper_literal: bool,
    },
    /// Snakeboard mean reconstruction Z_t = E[g_t]·X_t^h
    Reconstruct(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(common) => commands::cmd_simulate(common),
        Command::Drift(common) => commands::cmd_drift(common),
        Command::MeasureTest { common, grid } => commands::cmd_measure_test(common, *grid),
        Command::Plan {
            common,
            paper_literal,
        } => commands::cmd_plan(common, *paper_literal),
        Command::Reconstruct(common) => commands::cmd_reconstruct(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
