//! Koopman autoencoders: `x_τ ≈ ψ(Kᵗ φ(x₀))`, with the latent power applied
//! as `τ` repeated multiplications by `K`.

mod ensemble;
mod mlp;
mod model;

pub use ensemble::{ensemble_forecast, Ensemble, ForecastDistribution};
pub use mlp::{BoundMlp, Dense, Mlp};
pub use model::{Architecture, BoundModel, KoopmanAutoencoder, K_INIT_NOISE};

use crate::diffcore::DiffError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("{what}: expected width {expected}, got {got}")]
    WidthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("forecast horizon must be at least 1")]
    InvalidHorizon,
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("non-finite value in model input or parameters")]
    NonFinite,
    #[error(transparent)]
    Diff(#[from] DiffError),
}
