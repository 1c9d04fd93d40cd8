//! Command-line front end: stabilizability thresholds, Monte Carlo
//! simulations, phase-diagram sweeps, weight solving and self-checks.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod sweep;

use commands::{exit, Overrides, SweepArgs};
use config::{Axis, Template};

#[derive(Debug, Parser)]
#[command(name = "randact", version, about = "Stabilizability of linear systems with random actuation direction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify a spectrum. Exit code 0 = stabilizable, 1 = unstabilizable, 2 = inconclusive.
    Threshold {
        /// Eigenvalues of the system matrix.
        #[arg(required = true, allow_negative_numbers = true, num_args = 1..)]
        lambdas: Vec<String>,
    },
    /// Run a Monte Carlo ensemble described by a TOML config; writes CSV.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predicted (and optionally simulated) decision over a grid; writes CSV.
    Sweep {
        /// Optional TOML sweep config; flags override it.
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        template: Option<Template>,
        /// `min,max,steps` for λ1.
        #[arg(long, value_parser = Axis::parse)]
        axis1: Option<Axis>,
        /// `min,max,steps` for λ2.
        #[arg(long, value_parser = Axis::parse)]
        axis2: Option<Axis>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stationary weights of the greedy controller. Exit code 3 if some target fraction is not positive.
    SolveWeights {
        #[arg(required = true, allow_negative_numbers = true, num_args = 1..)]
        lambdas: Vec<String>,
        /// Survival probability of the control.
        #[arg(long, default_value_t = 1.0)]
        q: f64,
    },
    /// Run the built-in oracle checks. Exit code 0 iff all pass.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Threshold { lambdas } => commands::threshold(&lambdas, out, err),
        Command::Simulate { config, seed, trials, horizon, out: target } => commands::simulate(
            &config,
            Overrides { seed, trials, horizon },
            target.as_deref(),
            out,
            err,
        ),
        Command::Sweep { config, template, axis1, axis2, seed, trials, horizon, out: target } => {
            let args = SweepArgs {
                config,
                template,
                axis1,
                axis2,
                overrides: Overrides { seed, trials, horizon },
            };
            commands::sweep(&args, target.as_deref(), out, err)
        }
        Command::SolveWeights { lambdas, q } => commands::solve_weights(&lambdas, q, out, err),
        Command::Verify { seed } => commands::verify(seed, out),
    }
}

/// Parses `args` (including the program name) and runs the command. Parse
/// failures exit with 64; `--help` and `--version` with 0.
pub fn main_with_args<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli, out, err),
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
                exit::USAGE
            } else {
                let _ = write!(out, "{text}");
                exit::OK
            }
        }
    }
}
