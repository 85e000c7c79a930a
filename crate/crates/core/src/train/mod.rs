//! Joint ensemble training: one optimizer over the concatenated member
//! parameters, with per-member passes run on the worker pool.

mod config;
mod trainer;

pub use config::TrainConfig;
pub use trainer::{StepRecord, Trainer};

use crate::dataio::DataError;
use crate::diffcore::DiffError;
use crate::koopman::ModelError;
use crate::losses::LossError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("non-finite loss or gradient at step {step}; parameters were left at step {step}")]
    NonFinite { step: u64 },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Data(#[from] DataError),
}
