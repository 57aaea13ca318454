#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

mod commands;
mod config;
mod plot;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use commands::Run;
use config::{ConfigError, RunConfig};

/// Shortcut-to-adiabaticity pulse design for three-level Λ systems.
#[derive(Parser)]
#[command(name = "sta", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: ./out)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps (default: all cores)
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write SVG plots
    #[arg(long)]
    plot: bool,
    /// Integrator step in ns
    #[arg(long)]
    step_ns: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the pump and Stokes envelopes
    Synth {
        #[command(flatten)]
        common: Common,
        /// Time-reverse and negate the envelopes
        #[arg(long)]
        reverse: bool,
    },
    /// Integrate one run and print a summary
    Propagate {
        #[command(flatten)]
        common: Common,
        /// Use the time-reversed pulses, swapping start and target states
        #[arg(long)]
        reverse: bool,
        /// Also write the Bloch vector of the |1>, |e> pair
        #[arg(long)]
        bloch: bool,
    },
    /// Detuning, amplitude-error and off-resonant sweeps with a robustness report
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Coordinate scan over a2, a6, a8
    Optimize {
        #[command(flatten)]
        common: Common,
    },
    /// Compare the shortcut pulses with CHS pulses from the [chs] section
    CompareChs {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<Run> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.out.is_some() {
        config.out = common.out.clone();
    }
    if common.jobs.is_some() {
        config.jobs = common.jobs;
    }
    if common.step_ns.is_some() {
        config.step_ns = common.step_ns;
    }
    config.plot |= common.plot;
    Run::new(config)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, reverse } => commands::synth(&load(&common)?, reverse),
        Command::Propagate {
            common,
            reverse,
            bloch,
        } => commands::propagate(&load(&common)?, reverse, bloch),
        Command::Sweep { common } => commands::sweep(&load(&common)?),
        Command::Optimize { common } => commands::optimize(&load(&common)?),
        Command::CompareChs { common } => commands::compare_chs(&load(&common)?),
    }
}

/// 2 for bad input, 3 for numerical failure, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<sta_core::Error>() {
            return if e.is_numerical() || matches!(e, sta_core::Error::EmptyScan) {
                3
            } else {
                2
            };
        }
        if cause.is::<ConfigError>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
