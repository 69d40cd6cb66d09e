//! `sensor3d` command-line tool.

mod commands;
mod dataset;
mod failure;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use failure::{CliResult, Failure};

/// Overrides the worker thread count.
const THREADS_ENV: &str = "SENSOR3D_THREADS";

#[derive(Debug, Parser)]
#[command(name = "sensor3d", version, about = "Slice-context segmentation of volumetric scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset of phantom scans with organ masks.
    Synth(commands::synth::SynthArgs),
    /// Train a network on a dataset split.
    Train(commands::train::TrainArgs),
    /// Score checkpoints on held-out scans and compare them.
    Eval(commands::eval::EvalArgs),
    /// Segment one volume and render overlays.
    Infer(commands::infer::InferArgs),
    /// Export feature maps of one layer as PNG grids.
    DumpFeatures(commands::features::FeatureArgs),
}

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Config(e.to_string()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Synth(a) => commands::synth::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Infer(a) => commands::infer::run(a),
        Command::DumpFeatures(a) => commands::features::run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
