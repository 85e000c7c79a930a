use rayon::prelude::*;

use super::{Architecture, KoopmanAutoencoder, ModelError};
use crate::dataio::Normalizer;
use crate::losses::Regime;

/// `M` dimensionally identical members plus the normalization they were trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    members: Vec<KoopmanAutoencoder>,
    normalizer: Normalizer,
    pub regime: Regime,
    pub lambda: f64,
}

impl Ensemble {
    pub fn new(
        members: Vec<KoopmanAutoencoder>,
        normalizer: Normalizer,
        regime: Regime,
        lambda: f64,
    ) -> Result<Self, ModelError> {
        let first = members.first().ok_or(ModelError::EmptyEnsemble)?;
        if let Some(j) = members.iter().position(|m| m.architecture() != first.architecture()) {
            return Err(ModelError::InvalidArchitecture(format!(
                "member {j} has architecture {:?}, member 0 has {:?}",
                members[j].architecture(),
                first.architecture()
            )));
        }
        if normalizer.channels() != first.architecture().n {
            return Err(ModelError::WidthMismatch {
                what: "normalizer channels",
                expected: first.architecture().n,
                got: normalizer.channels(),
            });
        }
        Ok(Self { members, normalizer, regime, lambda })
    }

    /// Members initialized from seeds `seed, seed + 1, …`.
    pub fn random(
        arch: &Architecture,
        size: usize,
        seed: u64,
        normalizer: Normalizer,
        regime: Regime,
        lambda: f64,
    ) -> Result<Self, ModelError> {
        let members = (0..size as u64)
            .map(|j| KoopmanAutoencoder::random(arch, seed.wrapping_add(j)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(members, normalizer, regime, lambda)
    }

    pub fn members(&self) -> &[KoopmanAutoencoder] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [KoopmanAutoencoder] {
        &mut self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn architecture(&self) -> &Architecture {
        self.members[0].architecture()
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    /// Forecasts every member from a normalized initial state.
    pub fn forecast(&self, x0: &[f64], horizon: usize) -> Result<ForecastDistribution, ModelError> {
        ensemble_forecast(&self.members, x0, horizon)
    }

    /// Forecast from a state in data units, returned in data units.
    pub fn forecast_physical(&self, x0: &[f64], horizon: usize) -> Result<ForecastDistribution, ModelError> {
        let n = self.architecture().n;
        if x0.len() != n {
            return Err(ModelError::WidthMismatch { what: "initial state", expected: n, got: x0.len() });
        }
        let normalized = self.normalizer.apply(x0);
        let dist = self.forecast(&normalized, horizon)?;
        let members = self.normalizer.invert(&dist.members);
        ForecastDistribution::from_members(dist.size(), horizon, n, members)
    }
}

/// Runs every member from the same initial state.
///
/// Member forecasts may run concurrently; results are collected in member order.
pub fn ensemble_forecast(
    members: &[KoopmanAutoencoder],
    x0: &[f64],
    horizon: usize,
) -> Result<ForecastDistribution, ModelError> {
    let first = members.first().ok_or(ModelError::EmptyEnsemble)?;
    let n = first.architecture().n;
    let trajectories = members
        .par_iter()
        .map(|m| m.forecast(x0, horizon))
        .collect::<Result<Vec<_>, _>>()?;
    let flat = trajectories.into_iter().flatten().flatten().collect();
    ForecastDistribution::from_members(members.len(), horizon, n, flat)
}

/// Member trajectories with their mean and per-scalar spread.
///
/// Spread is the sample standard deviation across members (divisor `M − 1`),
/// defined as 0 for a single member.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastDistribution {
    size: usize,
    horizon: usize,
    channels: usize,
    /// `M × H × n`, row-major.
    members: Vec<f64>,
    /// `H × n`.
    mean: Vec<f64>,
    /// `H × n`.
    spread: Vec<f64>,
}

impl ForecastDistribution {
    pub fn from_members(size: usize, horizon: usize, channels: usize, members: Vec<f64>) -> Result<Self, ModelError> {
        if size == 0 {
            return Err(ModelError::EmptyEnsemble);
        }
        let per = horizon * channels;
        if members.len() != size * per {
            return Err(ModelError::WidthMismatch {
                what: "member trajectories",
                expected: size * per,
                got: members.len(),
            });
        }
        let mut mean = vec![0.0; per];
        for traj in members.chunks_exact(per) {
            for (m, v) in mean.iter_mut().zip(traj) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= size as f64;
        }
        let mut spread = vec![0.0; per];
        if size > 1 {
            for traj in members.chunks_exact(per) {
                for ((s, v), m) in spread.iter_mut().zip(traj).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            for s in &mut spread {
                *s = (*s / (size - 1) as f64).sqrt();
            }
        }
        Ok(Self { size, horizon, channels, members, mean, spread })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Member `j` at step `t` (0-based, i.e. forecast time `t + 1`), channel `c`.
    pub fn member(&self, j: usize, t: usize, c: usize) -> f64 {
        self.members[(j * self.horizon + t) * self.channels + c]
    }

    pub fn members_at(&self, t: usize, c: usize) -> Vec<f64> {
        (0..self.size).map(|j| self.member(j, t, c)).collect()
    }

    pub fn mean(&self, t: usize, c: usize) -> f64 {
        self.mean[t * self.channels + c]
    }

    pub fn spread(&self, t: usize, c: usize) -> f64 {
        self.spread[t * self.channels + c]
    }

    pub fn member_data(&self) -> &[f64] {
        &self.members
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_member_has_zero_spread() {
        let d = ForecastDistribution::from_members(1, 2, 1, vec![1.0, 5.0]).unwrap();
        assert_eq!(d.mean(1, 0), 5.0);
        assert_eq!(d.spread(0, 0), 0.0);
        assert_eq!(d.spread(1, 0), 0.0);
    }

    #[test]
    fn identical_members_have_zero_spread() {
        let d = ForecastDistribution::from_members(2, 1, 2, vec![0.3, 0.7, 0.3, 0.7]).unwrap();
        assert_eq!(d.spread(0, 0), 0.0);
        assert_eq!(d.spread(0, 1), 0.0);
    }

    #[test]
    fn two_members_one_and_three() {
        let d = ForecastDistribution::from_members(2, 1, 1, vec![1.0, 3.0]).unwrap();
        assert_eq!(d.mean(0, 0), 2.0);
        assert!((d.spread(0, 0) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_ensemble_rejected() {
        assert!(matches!(ensemble_forecast(&[], &[0.0], 1), Err(ModelError::EmptyEnsemble)));
        assert!(ForecastDistribution::from_members(0, 1, 1, vec![]).is_err());
    }
}
