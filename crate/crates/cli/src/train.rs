use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use koopman_uq::dataio::load_dataset;
use koopman_uq::{Checkpoint, StepRecord, TimeSeriesDataset, Trainer};

use crate::config::{required, RunArgs, RunConfig};
use crate::error::{io_error, CliError};

pub const LOG_HEADER: &str = "step,pred,ae,lin,orth,var,abs_dev,total,ensemble_variance";

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Continue from a checkpoint written by `train`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Print progress every this many steps (0 disables).
    #[arg(long, default_value_t = 100)]
    pub progress_every: u64,
}

pub fn log_line(r: &StepRecord) -> String {
    let l = &r.loss;
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.step, l.pred, l.ae, l.lin, l.orth, l.var, l.abs_dev, l.total, r.ensemble_variance
    )
}

/// Trains to completion, writing `train_log.csv` and `checkpoint.json` into
/// `out`. A non-finite step still leaves the last good checkpoint on disk.
pub fn train_into(
    mut trainer: Trainer,
    out: &Path,
    progress_every: u64,
    append_log: bool,
) -> Result<Checkpoint, CliError> {
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let log_path = out.join("train_log.csv");
    let file = if append_log {
        std::fs::OpenOptions::new().append(true).create(true).open(&log_path)
    } else {
        File::create(&log_path)
    }
    .map_err(|e| io_error(&log_path, e))?;
    let mut log = BufWriter::new(file);
    if !append_log || trainer.step_count() == 0 {
        writeln!(log, "{LOG_HEADER}").map_err(|e| io_error(&log_path, e))?;
    }
    let ck_path = out.join("checkpoint.json");
    let mut write_err = None;
    let result = trainer.run(|r| {
        if let Err(e) = writeln!(log, "{}", log_line(r)) {
            write_err.get_or_insert(e);
        }
        if progress_every > 0 && r.step % progress_every == 0 {
            eprintln!("step {}: total {:.6e}, ensemble variance {:.4e}", r.step, r.loss.total, r.ensemble_variance);
        }
    });
    log.flush().map_err(|e| io_error(&log_path, e))?;
    if let Some(e) = write_err {
        return Err(io_error(&log_path, e));
    }
    let checkpoint = trainer.checkpoint();
    checkpoint.save(&ck_path)?;
    match result {
        Ok(()) => Ok(checkpoint),
        Err(e) => {
            let e: CliError = e.into();
            Err(match e {
                CliError::Numeric(m) => {
                    CliError::Numeric(format!("{m}; last good checkpoint saved to {}", ck_path.display()))
                }
                other => other,
            })
        }
    }
}

pub fn load_training_data(config: &RunConfig) -> Result<TimeSeriesDataset, CliError> {
    Ok(load_dataset(required(&config.dataset, "--data")?)?)
}

pub fn run(args: &TrainArgs) -> Result<(), CliError> {
    let config = args.run.resolve()?;
    let out = required(&config.output, "--out")?.to_path_buf();
    let dataset = load_training_data(&config)?;
    let (trainer, append) = match &args.resume {
        Some(path) => (Trainer::resume(&Checkpoint::load(path)?, &dataset)?, true),
        None => (Trainer::new(config.train.clone(), &dataset)?, false),
    };
    let start = trainer.step_count();
    let ck = train_into(trainer, &out, args.progress_every, append)?;
    println!(
        "trained {} members ({}, lambda = {}) for steps {}..{}; checkpoint: {}",
        ck.members.len(),
        ck.regime,
        ck.lambda,
        start + 1,
        ck.step,
        out.join("checkpoint.json").display()
    );
    Ok(())
}
