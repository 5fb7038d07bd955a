//! `pilnm`: generate load-step datasets, train the PI-LNM and RNN
//! emulators, and compare them on held-out events.

mod commands;
mod error;
mod runs;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pilnm_core::pipeline::ModelKind;

#[derive(Debug, Parser)]
#[command(name = "pilnm", version, about = "Physics-informed latent ODE emulation of a grid-forming inverter")]
struct Cli {
    /// TOML file with optional [generate], [train] and [compare] tables.
    #[arg(long, global = true, value_name = "FILE", display_order = 100)]
    config: Option<PathBuf>,

    /// Output root holding one directory per run (default ./runs).
    #[arg(long, global = true, env = "PILNM_OUT", value_name = "DIR", display_order = 100)]
    out: Option<PathBuf>,

    /// Run directory name instead of a timestamped one.
    #[arg(long, global = true, value_name = "NAME", display_order = 100)]
    run_name: Option<String>,

    /// -v for progress, -vv for per-iteration detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count, display_order = 100)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate load-step events on the ground-truth inverter.
    Generate(GenerateArgs),
    /// Train one emulator on a generated dataset.
    Train(TrainArgs),
    /// Evaluate both emulators closed-loop on held-out events.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Number of events.
    #[arg(long)]
    k: Option<usize>,
    /// Smallest post-event load, p.u.
    #[arg(long)]
    load_min: Option<f64>,
    /// Largest post-event load, p.u.
    #[arg(long)]
    load_max: Option<f64>,
    /// Sample interval, s.
    #[arg(long)]
    dt: Option<f64>,
    /// Event length, s.
    #[arg(long)]
    horizon: Option<f64>,
    /// Seed for event loads and measurement noise.
    #[arg(long)]
    seed: Option<u64>,
    /// Measurement filter time constant of the truth model, s.
    #[arg(long)]
    t_m: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Emulator to train: pilnm or rnn.
    #[arg(long)]
    model: Option<ModelKind>,
    /// Dataset directory (default: latest generate run).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Windows per minibatch.
    #[arg(long)]
    batch: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Optimizer iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Samples per training window.
    #[arg(long)]
    window: Option<usize>,
    /// Relative error of the prior's droop and voltage-control gains.
    #[arg(long)]
    perturb: Option<f64>,
    /// Seed for initialization, minibatches and the prior's gain errors.
    #[arg(long)]
    seed: Option<u64>,
    /// Iterations between intermediate checkpoints, 0 for none.
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// PI-LNM checkpoint or training run (default: latest PI-LNM run).
    #[arg(long)]
    pilnm: Option<PathBuf>,
    /// RNN checkpoint or training run (default: latest RNN run).
    #[arg(long)]
    rnn: Option<PathBuf>,
    /// Training dataset (default: the one the PI-LNM run used).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Number of held-out events.
    #[arg(long)]
    events: Option<usize>,
    /// Prediction horizon, s.
    #[arg(long)]
    horizon: Option<f64>,
    /// Observed warm-up, s.
    #[arg(long)]
    warmup: Option<f64>,
    /// Seed for the held-out event loads.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
