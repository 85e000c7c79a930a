use serde::{Deserialize, Serialize};

use super::TimeSeriesDataset;

/// Channels whose standard deviation falls below this are left unscaled.
const MIN_STD: f64 = 1e-12;

/// Per-channel affine normalization `(x − mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    /// Fits on every state of every series. The std uses divisor `count − 1`.
    pub fn fit(ds: &TimeSeriesDataset) -> Self {
        Self::fit_rows(ds.data(), ds.channels())
    }

    /// Fits on flat rows of `channels` values.
    pub fn fit_rows(data: &[f64], channels: usize) -> Self {
        let rows = data.len() / channels;
        let mut mean = vec![0.0; channels];
        for row in data.chunks_exact(channels) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; channels];
        for row in data.chunks_exact(channels) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| if rows > 1 { (s / (rows - 1) as f64).sqrt() } else { 0.0 })
            .map(|s| if s < MIN_STD { 1.0 } else { s })
            .collect();
        Self { mean, std }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Normalizes flat rows of `channels()` values.
    pub fn apply(&self, data: &[f64]) -> Vec<f64> {
        let n = self.channels();
        data.iter().enumerate().map(|(i, v)| (v - self.mean[i % n]) / self.std[i % n]).collect()
    }

    /// Maps normalized flat rows back to data units.
    pub fn invert(&self, data: &[f64]) -> Vec<f64> {
        let n = self.channels();
        data.iter().enumerate().map(|(i, v)| v * self.std[i % n] + self.mean[i % n]).collect()
    }

    pub fn apply_dataset(&self, ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset, super::DataError> {
        ds.map_states(|s| self.apply(s))
    }
}
