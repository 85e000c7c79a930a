use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use koopman_uq::dataio::load_dataset;
use koopman_uq::{Regime, TimeSeriesDataset, Trainer};

use crate::config::{required, RunArgs, RunConfig};
use crate::error::{io_error, CliError};
use crate::evaluate::{evaluate, write_outputs, Report};
use crate::train::{load_training_data, train_into};

pub const SWEEP_HEADER: &str = "lambda,crps_train_extrap,crps_transfer,ssrel,ssrat,status";

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Held-out dataset for the transfer task.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.5,0.9,0.99,1", allow_negative_numbers = true)]
    pub lambdas: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

/// Scores of one trained ensemble.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub crps_train_extrap: f64,
    pub crps_transfer: f64,
    pub ssrel: f64,
    pub ssrat: f64,
}

/// The template config at weight `lambda`; an independent template switches
/// to the variance regime, which coincides with it at `λ = 0`.
pub fn config_for(template: &RunConfig, lambda: f64) -> RunConfig {
    let mut c = template.clone();
    c.train.lambda = lambda;
    if c.train.regime == Regime::Independent {
        c.train.regime = Regime::Variance;
    }
    c
}

fn run_one(
    config: &RunConfig,
    train: &TimeSeriesDataset,
    test: &TimeSeriesDataset,
    out: &std::path::Path,
    bins: usize,
) -> Result<SweepRow, CliError> {
    let trainer = Trainer::new(config.train.clone(), train)?;
    let ck = train_into(trainer, out, 0, false)?;
    let ensemble = ck.to_ensemble()?;
    let skip = config.train.train_horizon.unwrap_or(0).min(train.steps() - 1);
    let extrap = evaluate(&ensemble, train, None, skip, bins)?;
    let transfer = evaluate(&ensemble, test, config.horizon, 0, bins)?;
    write_outputs(
        out,
        &Report {
            checkpoint: out.join("checkpoint.json").display().to_string(),
            dataset: "transfer".into(),
            members: ensemble.len(),
            regime: ck.regime,
            lambda: ck.lambda,
            step: ck.step,
            evaluation: &transfer,
        },
    )?;
    Ok(SweepRow {
        lambda: config.train.lambda,
        crps_train_extrap: extrap.summary.crps,
        crps_transfer: transfer.summary.crps,
        ssrel: transfer.report.ssrel,
        ssrat: transfer.report.ssrat,
    })
}

pub fn run(args: &SweepArgs) -> Result<(), CliError> {
    let template = args.run.resolve()?;
    let out = required(&template.output, "--out")?.to_path_buf();
    let train = load_training_data(&template)?;
    let test = load_dataset(&args.test)?;
    for &lambda in &args.lambdas {
        config_for(&template, lambda).train.validate()?;
    }
    std::fs::create_dir_all(&out).map_err(|e| io_error(&out, e))?;
    let mut table = format!("{SWEEP_HEADER}\n");
    let mut failures = Vec::new();
    for &lambda in &args.lambdas {
        let config = config_for(&template, lambda);
        let dir = out.join(format!("lambda_{lambda}"));
        match run_one(&config, &train, &test, &dir, args.bins) {
            Ok(r) => {
                let _ = writeln!(table, "{},{},{},{},{},ok", r.lambda, r.crps_train_extrap, r.crps_transfer, r.ssrel, r.ssrat);
                eprintln!("lambda {lambda}: transfer CRPS {:.6e}, SSRAT {:.4}", r.crps_transfer, r.ssrat);
            }
            Err(e) => {
                let _ = writeln!(table, "{lambda},NaN,NaN,NaN,NaN,failed: {}", e.to_string().replace([',', '\n'], ";"));
                eprintln!("lambda {lambda}: failed: {e}");
                failures.push(e);
            }
        }
    }
    let path = out.join("sweep.csv");
    std::fs::write(&path, &table).map_err(|e| io_error(&path, e))?;
    print!("{table}");
    match failures.into_iter().next() {
        None => Ok(()),
        Some(first) => {
            let msg = format!("some sweep runs failed (first: {first}); table written to {}", path.display());
            Err(match first {
                CliError::Usage(_) => CliError::Usage(msg),
                CliError::Data(_) => CliError::Data(msg),
                CliError::Numeric(_) => CliError::Numeric(msg),
            })
        }
    }
}
