//! Synthetic trajectory generation, the KTS1 dataset format, checkpoints and
//! per-channel normalization.

mod checkpoint;
mod dataset;
mod normalize;
mod systems;

pub use checkpoint::{Checkpoint, OptimizerSnapshot, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use dataset::{decode_dataset, encode_dataset, load_dataset, save_dataset, TimeSeriesDataset, KTS_MAGIC};
pub use normalize::Normalizer;
pub use systems::{generate, GenerateOptions, InitDistribution, SystemKind, SystemSpec};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid system: {0}")]
    InvalidSpec(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint field `{field}`: {detail}")]
    Field { field: String, detail: String },
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io { path: path.into(), source }
    }

    pub(crate) fn field(field: impl Into<String>, detail: impl Into<String>) -> Self {
        DataError::Field { field: field.into(), detail: detail.into() }
    }
}
