//! `sensorsel`: data-driven sensor selection from the command line.
//!
//! Exit codes: 0 success (warnings go to the result file and stderr),
//! 2 configuration or input error, 3 data or rank failure, 4 dimension
//! mismatch.

mod commands;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sensorsel::Error;

#[derive(Parser, Debug)]
#[command(name = "sensorsel", version, about = "Input-output data-driven sensor selection for LTI systems")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Scenario JSON file.
    #[arg(long, short)]
    pub scenario: PathBuf,

    /// Output directory. Falls back to the scenario's `output_dir`, then `.`.
    #[arg(long, env = "SENSORSEL_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the scenario's plant to `plant.json`.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate the plant and write `trajectory.csv` plus `collect.json`.
    Collect {
        #[command(flatten)]
        common: Common,
    },
    /// Run the full pipeline; writes `result.json`, `scores.csv`, `timing.json`.
    Select {
        #[command(flatten)]
        common: Common,
        /// Use a recorded trajectory instead of simulating.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Sensor numbers of the trajectory's evaluated channel (with --trajectory).
        #[arg(long, value_delimiter = ',')]
        eval_sensors: Vec<usize>,
        /// Compare against model-based ground truth and write `errors.csv`.
        #[arg(long)]
        oracle: bool,
    },
    /// Check observability of a sensor set from data; writes `verdict.json`.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Sensor numbers to check.
        #[arg(long, value_delimiter = ',', required = true)]
        sensors: Vec<usize>,
        /// Absolute singular-value threshold (overrides the scenario).
        #[arg(long, conflicts_with = "rel_threshold")]
        threshold: Option<f64>,
        /// Threshold relative to the largest singular value.
        #[arg(long)]
        rel_threshold: Option<f64>,
        /// Use the plant's true state dimension for an exact verdict.
        #[arg(long)]
        oracle: bool,
    },
    /// Ground truth from the plant matrices; writes `oracle.json`.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Also run exhaustive subset search (candidate pools of at most 20).
        #[arg(long)]
        brute_force: bool,
    },
    /// Finite-horizon scores for every T up to the scenario's; writes `sweep.csv`.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Largest horizon; defaults to the scenario's T.
        #[arg(long)]
        max_steps: Option<usize>,
        /// Add oracle values and errors.
        #[arg(long)]
        oracle: bool,
    },
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DimensionMismatch { .. } => 4,
            Error::InsufficientSamples { .. }
            | Error::Unobservable
            | Error::HorizonBelowIndex { .. }
            | Error::UnstableDiscounted(_)
            | Error::Singular(_)
            | Error::Decomposition(_)
            | Error::NotTriangular(_)
            | Error::NotSquare(_)
            | Error::EmptyMatrix
            | Error::OutOfRange { .. }
            | Error::TimestampMismatch { .. }
            | Error::MixedHorizon => 3,
            Error::InvalidSelection(_)
            | Error::CombinatorialBlowup { .. }
            | Error::Config(_)
            | Error::Io(_)
            | Error::Parse(_) => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Generate { common } => commands::generate(&common),
        Command::Collect { common } => commands::collect(&common),
        Command::Select { common, trajectory, eval_sensors, oracle } => {
            commands::select(&common, trajectory.as_deref(), &eval_sensors, oracle)
        }
        Command::Verify { common, sensors, threshold, rel_threshold, oracle } => {
            commands::verify(&common, &sensors, threshold, rel_threshold, oracle)
        }
        Command::Oracle { common, brute_force } => commands::oracle(&common, brute_force),
        Command::Sweep { common, max_steps, oracle } => commands::sweep(&common, max_steps, oracle),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
