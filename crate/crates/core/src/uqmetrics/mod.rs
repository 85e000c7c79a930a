//! Probabilistic forecast verification: CRPS and spread-skill diagnostics.
//!
//! Spread is the per-scalar standard deviation across members with divisor
//! `M − 1` (the training coupling term uses the biased divisor `M`). Skill is
//! the error of the ensemble mean.

mod crps;
mod evaluate;
mod spread_skill;

pub use crps::{crps_ensemble, crps_integral_oracle, crps_vector, IntegralCrps};
pub use evaluate::{evaluate_ensemble, Evaluation};
pub use spread_skill::{
    score_forecasts, spread_skill_from_pairs, spread_skill_report, ReportFlag, ScoreSummary, ScoredSample,
    SpreadSkillBin, SpreadSkillReport, DEFAULT_BINS,
};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no ensemble members")]
    NoMembers,
    #[error("no samples to score")]
    NoSamples,
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
