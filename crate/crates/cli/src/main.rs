mod config;
mod error;
mod evaluate;
mod forecast;
mod gen_data;
mod plot;
mod sweep;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;

/// Koopman autoencoder ensembles: generate data, train, evaluate, forecast and sweep λ.
#[derive(Parser, Debug)]
#[command(name = "koopman-uq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dynamical system and write a KTS1 dataset.
    GenData(gen_data::GenDataArgs),
    /// Train an ensemble; writes train_log.csv and checkpoint.json.
    Train(train::TrainArgs),
    /// Score a checkpoint on a dataset; writes report.json and spread_skill.csv.
    Evaluate(evaluate::EvaluateArgs),
    /// Forecast one series; writes a trajectory CSV and optionally an SVG.
    Forecast(forecast::ForecastArgs),
    /// Train and score one ensemble per λ; writes sweep.csv.
    Sweep(sweep::SweepArgs),
}

/// Caps the worker pool at `KOOPMAN_UQ_THREADS` when it is set.
fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("KOOPMAN_UQ_THREADS") else { return Ok(()) };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Usage(format!("KOOPMAN_UQ_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {threads} worker threads: {e}")))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::GenData(a) => gen_data::run(a),
        Command::Train(a) => train::run(a),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Forecast(a) => forecast::run(a),
        Command::Sweep(a) => sweep::run(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
