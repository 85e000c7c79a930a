//! Training objectives for single models and ensembles.
//!
//! Every loss is a plain sum over series `i` and time steps, anchored at
//! `t = 0` of each series. Two distance families are supported: squared L2
//! and L1. The orthogonality penalty on `K` is always squared Frobenius.
//!
//! Ensemble objectives:
//! - `variance`: `(1/M)·Σⱼ L(θⱼ) + λ·L_var`, with `L_var = −(1/M)·Σⱼ‖x̂ⱼ − x̄‖²`
//!   (biased divisor). `λ = 0` is independent training. `λ > 1` makes the
//!   objective unbounded below, so it must be explicitly allowed.
//! - `crps_proxy`: `Σⱼ L₁(θⱼ) + λ·L_abs`, with `L_abs = −½·(1/M)·Σⱼ|x̂ⱼ − x̄|`.

mod batch;
mod ensemble;
mod terms;

pub use batch::{BatchVars, TrainingBatch};
pub use ensemble::{
    abs_deviation_loss, abs_deviation_values, ensemble_loss, ensemble_loss_values, penalized_prediction_gap,
    variance_loss, variance_values, EnsembleLossVars, Objective,
};
pub use terms::{
    ae_loss, distance, lin_loss, orth_loss, orth_loss_value, pred_loss, single_model_loss, single_model_loss_values,
    MemberLossVars, ModelGraph,
};

use serde::{Deserialize, Serialize};

use crate::diffcore::DiffError;

/// Distance used by the data-space loss terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    SqL2,
    L1,
}

/// Ensemble training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    Independent,
    Variance,
    CrpsProxy,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Independent => "independent",
            Regime::Variance => "variance",
            Regime::CrpsProxy => "crps_proxy",
        }
    }

    /// Distance family of the per-member terms.
    pub fn norm(self) -> Norm {
        match self {
            Regime::CrpsProxy => Norm::L1,
            _ => Norm::SqL2,
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "independent" => Ok(Regime::Independent),
            "variance" => Ok(Regime::Variance),
            "crps_proxy" | "crps-proxy" => Ok(Regime::CrpsProxy),
            other => Err(format!("unknown regime `{other}` (expected independent, variance or crps_proxy)")),
        }
    }
}

/// Scalar values of every loss component.
///
/// `total = pred + ae + lin + alpha·orth + lambda·(var + abs_dev)`, where the
/// per-member components are already aggregated across members (mean for the
/// independent/variance regimes, sum for crps_proxy) and the unused coupling
/// term is 0.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pred: f64,
    pub ae: f64,
    pub lin: f64,
    pub orth: f64,
    pub var: f64,
    pub abs_dev: f64,
    pub total: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    /// The documented weighted combination of the components.
    pub fn recombined(&self) -> f64 {
        self.pred + self.ae + self.lin + self.alpha * self.orth + self.lambda * (self.var + self.abs_dev)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("alpha must be non-negative, got {0}")]
    NegativeAlpha(f64),
    #[error("lambda must be non-negative, got {0}")]
    NegativeLambda(f64),
    #[error(
        "lambda = {0} exceeds 1: the training procedure will diverge, since the \
         inter-member variance is then unbounded; set allow_divergent to run anyway"
    )]
    DivergentLambda(f64),
    #[error("the independent regime has no coupling term; lambda must be 0, got {0}")]
    LambdaWithIndependent(f64),
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("K must be square, got shape {0:?}")]
    NonSquareK(Vec<usize>),
    #[error("invalid batch: {0}")]
    Batch(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
}
