//! `optctrl`: control point optimization for biharmonic deformation.

mod commands;
mod config;
mod error;
mod io;
mod report;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BenchArgs, DeformArgs, GenBarArgs, GenTargetsArgs};
use config::RunArgs;
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "optctrl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search for the control points that best fit the targets.
    Optimize(RunArgs),
    /// Run the search and every baseline on the same inputs.
    Baseline(RunArgs),
    /// Deform the template from a report's control points.
    Deform(DeformArgs),
    /// Write hinge-bent copies of a template as .xyz targets.
    GenTargets(GenTargetsArgs),
    /// Write a tetrahedralized box as a Medit mesh.
    GenBar(GenBarArgs),
    /// Time naive and fast fitting evaluations and the searches.
    Bench(BenchArgs),
}

/// Sizes the global rayon pool from `OPTCTRL_THREADS` when set.
fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("OPTCTRL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("OPTCTRL_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    match cli.command {
        Command::Optimize(a) => commands::optimize_cmd(a),
        Command::Baseline(a) => commands::baseline_cmd(a),
        Command::Deform(a) => commands::deform_cmd(a),
        Command::GenTargets(a) => commands::gen_targets_cmd(a),
        Command::GenBar(a) => commands::gen_bar_cmd(a),
        Command::Bench(a) => commands::bench_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
