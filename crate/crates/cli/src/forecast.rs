use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use koopman_uq::dataio::load_dataset;
use koopman_uq::{Checkpoint, ForecastDistribution};

use crate::error::{io_error, CliError};
use crate::plot::forecast_svg;

#[derive(Args, Debug)]
pub struct ForecastArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Series to forecast from its state at `t = 0`.
    #[arg(long, default_value_t = 0)]
    pub series: usize,
    /// Forecast steps; defaults to the full series.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Trajectory CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional SVG band plot.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

/// Columns `t`, then per channel `truth`, `mean`, one per member, `spread`.
pub fn forecast_csv(dist: &ForecastDistribution, truth: &[f64], names: &[String]) -> String {
    let (m, h, n) = (dist.size(), dist.horizon(), dist.channels());
    let mut out = String::from("t");
    for name in names {
        let _ = write!(out, ",truth_{name},mean_{name}");
        for j in 0..m {
            let _ = write!(out, ",member_{j}_{name}");
        }
        let _ = write!(out, ",spread_{name}");
    }
    out.push('\n');
    for t in 0..h {
        let _ = write!(out, "{}", t + 1);
        for c in 0..n {
            let _ = write!(out, ",{},{}", truth[t * n + c], dist.mean(t, c));
            for j in 0..m {
                let _ = write!(out, ",{}", dist.member(j, t, c));
            }
            let _ = write!(out, ",{}", dist.spread(t, c));
        }
        out.push('\n');
    }
    out
}

pub fn run(args: &ForecastArgs) -> Result<(), CliError> {
    let ensemble = Checkpoint::load(&args.checkpoint)?.to_ensemble()?;
    let dataset = load_dataset(&args.data)?;
    if args.series >= dataset.series() {
        return Err(CliError::Usage(format!(
            "--series {} is out of range: the dataset has {} series",
            args.series,
            dataset.series()
        )));
    }
    let horizon = args.horizon.unwrap_or(dataset.steps());
    if horizon == 0 || horizon > dataset.steps() {
        return Err(CliError::Usage(format!("--horizon must be in 1..={}, got {horizon}", dataset.steps())));
    }
    let n = dataset.channels();
    let dist = ensemble.forecast_physical(dataset.state(args.series, 0), horizon)?;
    let truth = &dataset.series_data(args.series)[n..(horizon + 1) * n];
    let csv = forecast_csv(&dist, truth, &dataset.channel_names);
    std::fs::write(&args.out, csv).map_err(|e| io_error(&args.out, e))?;
    if let Some(path) = &args.svg {
        std::fs::write(path, forecast_svg(&dist, truth, &dataset.channel_names)).map_err(|e| io_error(path, e))?;
    }
    println!("forecast of series {} over {horizon} steps written to {}", args.series, args.out.display());
    Ok(())
}
