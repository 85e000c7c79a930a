use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use koopman_uq::dataio::load_dataset;
use koopman_uq::uqmetrics::evaluate_ensemble;
use koopman_uq::{Checkpoint, Ensemble, Evaluation, Regime, TimeSeriesDataset};
use serde::Serialize;

use crate::error::{io_error, CliError};

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Forecast steps from `t = 0`; defaults to the full series.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Leading forecast steps excluded from scoring (e.g. the training window).
    #[arg(long, default_value_t = 0)]
    pub skip: usize,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Directory for `report.json` and `spread_skill.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
pub struct Report<'a> {
    pub checkpoint: String,
    pub dataset: String,
    pub members: usize,
    pub regime: Regime,
    pub lambda: f64,
    pub step: u64,
    #[serde(flatten)]
    pub evaluation: &'a Evaluation,
}

pub fn evaluate(
    ensemble: &Ensemble,
    dataset: &TimeSeriesDataset,
    horizon: Option<usize>,
    skip: usize,
    bins: usize,
) -> Result<Evaluation, CliError> {
    let horizon = horizon.unwrap_or(dataset.steps());
    Ok(evaluate_ensemble(ensemble, dataset, horizon, skip, bins)?)
}

pub fn bins_csv(ev: &Evaluation) -> String {
    let mut out = String::from("lower,upper,spread,skill,count\n");
    for b in &ev.report.bins {
        let _ = writeln!(out, "{},{},{},{},{}", b.lower, b.upper, b.spread, b.skill, b.count);
    }
    out
}

pub fn write_outputs(out: &Path, report: &Report<'_>) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let json = serde_json::to_string_pretty(report).map_err(|e| CliError::Data(e.to_string()))?;
    let path = out.join("report.json");
    std::fs::write(&path, json + "\n").map_err(|e| io_error(&path, e))?;
    let path = out.join("spread_skill.csv");
    std::fs::write(&path, bins_csv(report.evaluation)).map_err(|e| io_error(&path, e))?;
    Ok(())
}

pub fn run(args: &EvaluateArgs) -> Result<(), CliError> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let ensemble = ck.to_ensemble()?;
    let dataset = load_dataset(&args.data)?;
    let ev = evaluate(&ensemble, &dataset, args.horizon, args.skip, args.bins)?;
    let report = Report {
        checkpoint: args.checkpoint.display().to_string(),
        dataset: args.data.display().to_string(),
        members: ensemble.len(),
        regime: ck.regime,
        lambda: ck.lambda,
        step: ck.step,
        evaluation: &ev,
    };
    write_outputs(&args.out, &report)?;
    let s = &ev.summary;
    println!("CRPS {:.6e} (channel sum {:.6e}), MAE {:.6e}, RMSE {:.6e}", s.crps, s.crps_channel_sum, s.mae, s.rmse);
    let flag = ev.report.flag.map(|f| format!(" ({f:?})")).unwrap_or_default();
    println!("SSREL {:.6e}, SSRAT {:.4}{flag}", ev.report.ssrel, ev.report.ssrat);
    Ok(())
}
