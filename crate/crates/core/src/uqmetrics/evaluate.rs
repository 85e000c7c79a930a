use serde::{Deserialize, Serialize};

use super::{score_forecasts, spread_skill_report, MetricsError, ScoreSummary, ScoredSample, SpreadSkillReport};
use crate::dataio::TimeSeriesDataset;
use crate::koopman::Ensemble;

/// Scores of an ensemble forecasting every series of a dataset from `t = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub horizon: usize,
    /// Forecast times `≤ skip` were excluded from scoring.
    pub skip: usize,
    pub series: usize,
    pub summary: ScoreSummary,
    pub report: SpreadSkillReport,
    #[serde(skip)]
    pub samples: Vec<ScoredSample>,
}

/// Forecasts `horizon` steps from each series' first state, in data units,
/// and scores forecast times `skip + 1 ..= horizon`.
pub fn evaluate_ensemble(
    ensemble: &Ensemble,
    dataset: &TimeSeriesDataset,
    horizon: usize,
    skip: usize,
    bins: usize,
) -> Result<Evaluation, MetricsError> {
    let n = ensemble.architecture().n;
    if dataset.channels() != n {
        return Err(MetricsError::ShapeMismatch(format!(
            "ensemble expects {n} channels, dataset has {}",
            dataset.channels()
        )));
    }
    if horizon == 0 || horizon > dataset.steps() {
        return Err(MetricsError::InvalidArgument(format!(
            "horizon must be in 1..={}, got {horizon}",
            dataset.steps()
        )));
    }
    if skip >= horizon {
        return Err(MetricsError::InvalidArgument(format!("nothing to score: skip {skip} ≥ horizon {horizon}")));
    }
    let mut samples = Vec::with_capacity(dataset.series() * (horizon - skip) * n);
    for i in 0..dataset.series() {
        let dist = ensemble
            .forecast_physical(dataset.state(i, 0), horizon)
            .map_err(|e| MetricsError::InvalidArgument(e.to_string()))?;
        let truth = &dataset.series_data(i)[n..(horizon + 1) * n];
        samples.extend(score_forecasts(&dist, truth)?.into_iter().filter(|s| s.step >= skip));
    }
    let summary = ScoreSummary::from_samples(&samples, n)?;
    let report = spread_skill_report(&samples, bins)?;
    Ok(Evaluation { horizon, skip, series: dataset.series(), summary, report, samples })
}
