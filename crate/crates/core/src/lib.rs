//! Koopman autoencoder ensembles trained for calibrated uncertainty.
//!
//! - [`diffcore`]: reverse-mode automatic differentiation and Adam.
//! - [`koopman`]: encoder / latent operator / decoder models and ensembles.
//! - [`losses`]: single-model and ensemble training objectives.
//! - [`uqmetrics`]: CRPS and spread-skill verification.
//! - [`dataio`]: synthetic systems, dataset and checkpoint formats, normalization.
//! - [`train`]: joint ensemble training.

pub mod dataio;
pub mod diffcore;
pub mod koopman;
pub mod losses;
pub mod train;
pub mod uqmetrics;

pub use dataio::{Checkpoint, DataError, Normalizer, SystemKind, SystemSpec, TimeSeriesDataset};
pub use diffcore::{Activation, AdamConfig, DiffError, RealArray, Tape, Var};
pub use koopman::{Architecture, Ensemble, ForecastDistribution, KoopmanAutoencoder, ModelError};
pub use losses::{LossBreakdown, LossError, Objective, Regime};
pub use train::{StepRecord, TrainConfig, TrainError, Trainer};
pub use uqmetrics::{Evaluation, MetricsError, SpreadSkillReport};

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
}
