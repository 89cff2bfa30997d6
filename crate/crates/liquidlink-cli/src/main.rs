//! `liquidlink` — proactive link-blockage prediction on synthetic
//! directional-link power traces.
//!
//! The tool trains a sparse continuous-time recurrent network on a
//! controlled "indoor" scenario and scores it on held-out "outdoor"
//! scenarios, one model per prediction horizon. `pipeline` chains the whole
//! protocol; `gradcheck` and `wiring` are verification utilities.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 3 I/O error,
//! 4 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use liquidlink_core::error::Error;

use crate::config::{load_file_config, resolve, CliOverrides, FileConfig};

#[derive(Parser)]
#[command(
    name = "liquidlink",
    version,
    about = "Train and evaluate a liquid-time-constant blockage predictor on synthetic link traces"
)]
struct Cli {
    /// JSON config file, or a run manifest written by an earlier command.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Base seed; wiring, training, and default scenario seeds derive from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Prediction horizons, comma separated (one model per horizon).
    #[arg(long, global = true, value_delimiter = ',', value_name = "K,K,…")]
    horizons: Option<Vec<usize>>,

    /// Directory for all outputs.
    #[arg(long, global = true, default_value = "runs", value_name = "DIR")]
    out_dir: PathBuf,

    /// Worker threads for per-sample training and scoring work.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Weak-beam exclusion threshold on mean unblocked normalized power.
    #[arg(long, global = true, value_name = "POWER")]
    threshold: Option<f64>,

    /// Observation-window length in samples.
    #[arg(long, global = true, value_name = "SAMPLES")]
    t_ob: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic training + test scenario set.
    Simulate,
    /// Train one checkpoint per horizon on the training scenario.
    Train,
    /// Score each checkpoint on every test scenario and write reports.
    Eval,
    /// simulate → train → eval in one run.
    Pipeline,
    /// Compare exact gradients against a finite-difference probe.
    Gradcheck {
        /// Random (wiring, parameters, window) instances to sweep.
        #[arg(long)]
        instances: Option<usize>,
        /// Central-difference step size.
        #[arg(long)]
        eps: Option<f64>,
        /// Corrupt one analytic coordinate to prove the check can fail.
        #[arg(long, hide = true)]
        inject_bug: bool,
    },
    /// Emit the generated wiring as JSON and Graphviz DOT.
    Wiring,
}

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Io { .. } => 3,
        Error::Numeric(_) => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> liquidlink_core::error::Result<()> {
    let file = match &cli.config {
        Some(path) => load_file_config(path)?,
        None => FileConfig::default(),
    };
    let mut overrides = CliOverrides {
        seed: cli.seed,
        t_ob: cli.t_ob,
        horizons: cli.horizons.clone(),
        threshold: cli.threshold,
        ..CliOverrides::default()
    };
    if let Command::Gradcheck { instances, eps, .. } = &cli.command {
        overrides.gradcheck_instances = *instances;
        overrides.gradcheck_eps = *eps;
    }
    let config = resolve(file, &overrides)?;

    match cli.command {
        Command::Simulate => commands::simulate(&config, &cli.out_dir).map(|_| ()),
        Command::Train => commands::train_models(&config, &cli.out_dir, cli.workers).map(|_| ()),
        Command::Eval => commands::eval_models(&config, &cli.out_dir, cli.workers).map(|_| ()),
        Command::Pipeline => commands::pipeline(&config, &cli.out_dir, cli.workers),
        Command::Gradcheck { inject_bug, .. } => {
            commands::gradcheck(&config, &cli.out_dir, cli.workers, inject_bug)
        }
        Command::Wiring => commands::wiring(&config, &cli.out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code(&error))
        }
    }
}
