use serde::{Deserialize, Serialize};

use super::{crps_ensemble, MetricsError};
use crate::koopman::ForecastDistribution;

pub const DEFAULT_BINS: usize = 20;

/// One univariate verification sample: a single (step, channel) scalar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    /// 0-based forecast step (forecast time `step + 1`).
    pub step: usize,
    pub channel: usize,
    pub members: Vec<f64>,
    pub truth: f64,
    /// Sample std of the members (divisor `M − 1`; 0 for one member).
    pub spread: f64,
    /// `|mean − truth|`.
    pub error: f64,
    pub crps: f64,
}

impl ScoredSample {
    pub fn new(step: usize, channel: usize, members: Vec<f64>, truth: f64) -> Result<Self, MetricsError> {
        let crps = crps_ensemble(&members, truth)?;
        let mut sorted = members.clone();
        sorted.sort_by(f64::total_cmp);
        let m = members.len() as f64;
        let mean = sorted.iter().sum::<f64>() / m;
        let spread = if members.len() > 1 {
            (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self { step, channel, members, truth, spread, error: (mean - truth).abs(), crps })
    }
}

/// Aggregate scores over a set of samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub samples: usize,
    /// Mean of per-scalar CRPS.
    pub crps: f64,
    /// Mean over (series, step) of the channel-summed CRPS.
    pub crps_channel_sum: f64,
    /// Mean absolute error of the ensemble mean.
    pub mae: f64,
    /// Root mean squared error of the ensemble mean.
    pub rmse: f64,
    /// Root mean squared spread.
    pub rms_spread: f64,
}

impl ScoreSummary {
    pub fn from_samples(samples: &[ScoredSample], channels: usize) -> Result<Self, MetricsError> {
        if samples.is_empty() {
            return Err(MetricsError::NoSamples);
        }
        if channels == 0 || samples.len() % channels != 0 {
            return Err(MetricsError::ShapeMismatch(format!(
                "{} samples cannot be grouped into vectors of {channels} channels",
                samples.len()
            )));
        }
        let count = samples.len() as f64;
        let crps_total: f64 = samples.iter().map(|s| s.crps).sum();
        Ok(Self {
            samples: samples.len(),
            crps: crps_total / count,
            crps_channel_sum: crps_total / (samples.len() / channels) as f64,
            mae: samples.iter().map(|s| s.error).sum::<f64>() / count,
            rmse: (samples.iter().map(|s| s.error * s.error).sum::<f64>() / count).sqrt(),
            rms_spread: (samples.iter().map(|s| s.spread * s.spread).sum::<f64>() / count).sqrt(),
        })
    }
}

/// Scores a forecast against its `H × n` truth, one sample per (step, channel).
pub fn score_forecasts(dist: &ForecastDistribution, truth: &[f64]) -> Result<Vec<ScoredSample>, MetricsError> {
    let (h, n) = (dist.horizon(), dist.channels());
    if truth.len() != h * n {
        return Err(MetricsError::ShapeMismatch(format!(
            "forecast is {h}×{n}, truth has {} values",
            truth.len()
        )));
    }
    let mut out = Vec::with_capacity(h * n);
    for t in 0..h {
        for c in 0..n {
            out.push(ScoredSample::new(t, c, dist.members_at(t, c), truth[t * n + c])?);
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadSkillBin {
    pub lower: f64,
    pub upper: f64,
    /// RMS spread of the bin's samples.
    pub spread: f64,
    /// RMS error of the bin's samples.
    pub skill: f64,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFlag {
    /// Every spread is zero.
    Overconfident,
    /// Every error is zero while some spread is not.
    ZeroError,
}

/// Binned spread-skill diagram with its two summary scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadSkillReport {
    /// Non-empty bins in increasing spread order.
    pub bins: Vec<SpreadSkillBin>,
    pub bin_count: usize,
    pub total: usize,
    /// `Σ_b (count_b / total)·|spread_b − skill_b|`.
    pub ssrel: f64,
    /// `√mean(spread²) / √mean(error²)` over all samples, unbinned.
    pub ssrat: f64,
    pub flag: Option<ReportFlag>,
}

pub fn spread_skill_report(samples: &[ScoredSample], bin_count: usize) -> Result<SpreadSkillReport, MetricsError> {
    let pairs: Vec<(f64, f64)> = samples.iter().map(|s| (s.spread, s.error)).collect();
    spread_skill_from_pairs(&pairs, bin_count)
}

/// Report from `(spread, error)` pairs, binned on equal-width spread intervals
/// over `[0, max spread]`.
pub fn spread_skill_from_pairs(pairs: &[(f64, f64)], bin_count: usize) -> Result<SpreadSkillReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::NoSamples);
    }
    if bin_count == 0 {
        return Err(MetricsError::InvalidArgument("bin count must be at least 1".into()));
    }
    if pairs.iter().any(|(s, e)| !(s.is_finite() && e.is_finite()) || *s < 0.0 || *e < 0.0) {
        return Err(MetricsError::NonFinite("spread and error must be finite and non-negative"));
    }
    let total = pairs.len();
    let max_spread = pairs.iter().map(|p| p.0).fold(0.0, f64::max);

    let mut sums = vec![(0.0f64, 0.0f64, 0usize); if max_spread > 0.0 { bin_count } else { 1 }];
    let width = max_spread / bin_count as f64;
    for &(s, e) in pairs {
        let idx = if max_spread > 0.0 { ((s / width) as usize).min(bin_count - 1) } else { 0 };
        let slot = &mut sums[idx];
        slot.0 += s * s;
        slot.1 += e * e;
        slot.2 += 1;
    }
    let bins: Vec<SpreadSkillBin> = sums
        .iter()
        .enumerate()
        .filter(|(_, (_, _, c))| *c > 0)
        .map(|(i, (ss, ee, c))| SpreadSkillBin {
            lower: i as f64 * width,
            upper: (i + 1) as f64 * width,
            spread: (ss / *c as f64).sqrt(),
            skill: (ee / *c as f64).sqrt(),
            count: *c,
        })
        .collect();
    let ssrel = bins
        .iter()
        .map(|b| b.count as f64 / total as f64 * (b.spread - b.skill).abs())
        .sum();

    let mean_s2 = pairs.iter().map(|p| p.0 * p.0).sum::<f64>() / total as f64;
    let mean_e2 = pairs.iter().map(|p| p.1 * p.1).sum::<f64>() / total as f64;
    let (ssrat, flag) = if max_spread == 0.0 {
        (0.0, Some(ReportFlag::Overconfident))
    } else if mean_e2 == 0.0 {
        (f64::INFINITY, Some(ReportFlag::ZeroError))
    } else {
        (mean_s2.sqrt() / mean_e2.sqrt(), None)
    };
    Ok(SpreadSkillReport { bins, bin_count, total, ssrel, ssrat, flag })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_calibration() {
        let pairs: Vec<(f64, f64)> = (1..=50).map(|i| (i as f64 * 0.1, i as f64 * 0.1)).collect();
        let r = spread_skill_from_pairs(&pairs, DEFAULT_BINS).unwrap();
        assert!(r.ssrel.abs() < 1e-12);
        assert!((r.ssrat - 1.0).abs() < 1e-12);
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), 50);
        for b in &r.bins {
            assert!((b.spread - b.skill).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_spread_is_overconfident() {
        let r = spread_skill_from_pairs(&[(0.0, 0.5), (0.0, 1.0)], DEFAULT_BINS).unwrap();
        assert_eq!(r.ssrat, 0.0);
        assert_eq!(r.flag, Some(ReportFlag::Overconfident));
        assert_eq!(r.bins.len(), 1);
        assert_eq!(r.bins[0].spread, 0.0);
        assert_eq!(r.bins[0].count, 2);
    }

    #[test]
    fn doubled_spread_hand_constructed() {
        // Errors 1..4, spreads 2..8: four samples in four distinct bins over
        // [0, 8] (width 0.4 → bins 5, 10, 15 and the clamped top bin).
        // SSRAT = 2, SSREL = Σ ¼·|2e − e| = mean error = 2.5.
        let pairs = [(2.0, 1.0), (4.0, 2.0), (6.0, 3.0), (8.0, 4.0)];
        let r = spread_skill_from_pairs(&pairs, 20).unwrap();
        assert_eq!(r.bins.len(), 4);
        assert!((r.ssrat - 2.0).abs() < 1e-12);
        assert!((r.ssrel - 2.5).abs() < 1e-12);
        assert_eq!(r.bins[3].count, 1);
        assert_eq!(r.flag, None);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(spread_skill_from_pairs(&[], 20).is_err());
        assert!(spread_skill_from_pairs(&[(1.0, 1.0)], 0).is_err());
        assert!(spread_skill_from_pairs(&[(-1.0, 1.0)], 20).is_err());
        assert!(spread_skill_from_pairs(&[(f64::NAN, 1.0)], 20).is_err());
    }

    #[test]
    fn deterministic_ensemble_crps_is_mae() {
        let dist = ForecastDistribution::from_members(2, 2, 1, vec![1.0, 2.0, 1.0, 2.0]).unwrap();
        let samples = score_forecasts(&dist, &[0.5, 3.0]).unwrap();
        assert!(samples.iter().all(|s| s.spread == 0.0));
        let summary = ScoreSummary::from_samples(&samples, 1).unwrap();
        assert!((summary.crps - summary.mae).abs() < 1e-15);
        assert_eq!(spread_skill_report(&samples, 20).unwrap().ssrat, 0.0);
    }

    #[test]
    fn two_member_constant_ensemble() {
        // Members {0, 1} at every scalar, truth 0 → CRPS 0.25 everywhere.
        let dist = ForecastDistribution::from_members(2, 3, 2, [vec![0.0; 6], vec![1.0; 6]].concat()).unwrap();
        let samples = score_forecasts(&dist, &[0.0; 6]).unwrap();
        assert!(samples.iter().all(|s| s.crps == 0.25));
        let summary = ScoreSummary::from_samples(&samples, 2).unwrap();
        assert_eq!(summary.crps, 0.25);
        assert_eq!(summary.crps_channel_sum, 0.5);
    }

    #[test]
    fn member_order_does_not_matter() {
        let a = ForecastDistribution::from_members(3, 1, 1, vec![0.1, 2.0, -0.7]).unwrap();
        let b = ForecastDistribution::from_members(3, 1, 1, vec![-0.7, 0.1, 2.0]).unwrap();
        let sa = score_forecasts(&a, &[0.4]).unwrap();
        let sb = score_forecasts(&b, &[0.4]).unwrap();
        assert_eq!(sa[0].crps, sb[0].crps);
        assert_eq!(sa[0].spread, sb[0].spread);
        assert_eq!(sa[0].error, sb[0].error);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let dist = ForecastDistribution::from_members(1, 2, 1, vec![1.0, 2.0]).unwrap();
        assert!(score_forecasts(&dist, &[0.0]).is_err());
    }
}
