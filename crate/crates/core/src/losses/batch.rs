use super::LossError;
use crate::diffcore::{RealArray, Tape, Var};

/// `B` normalized series of `T + 1` steps each, anchored at their first step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingBatch {
    series: usize,
    steps: usize,
    channels: usize,
    /// `B × (T+1) × n`, series-major.
    data: Vec<f64>,
}

impl TrainingBatch {
    pub fn new(series: usize, steps: usize, channels: usize, data: Vec<f64>) -> Result<Self, LossError> {
        if series == 0 || channels == 0 {
            return Err(LossError::Batch("batch needs at least one series and one channel".into()));
        }
        if steps < 2 {
            return Err(LossError::Batch(format!("horizon T must be at least 1, got {} steps", steps)));
        }
        if data.len() != series * steps * channels {
            return Err(LossError::Batch(format!(
                "{series}×{steps}×{channels} batch needs {} values, got {}",
                series * steps * channels,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(LossError::Batch("batch contains non-finite values".into()));
        }
        Ok(Self { series, steps, channels, data })
    }

    pub fn series(&self) -> usize {
        self.series
    }

    /// `T`: number of forecast steps after the anchor.
    pub fn horizon(&self) -> usize {
        self.steps - 1
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// State of series `i` at time `t`.
    pub fn state(&self, i: usize, t: usize) -> &[f64] {
        let start = (i * self.steps + t) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Rows ordered `t·B + i` for `t` in `from..steps`.
    fn time_major(&self, from: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity((self.steps - from) * self.series * self.channels);
        for t in from..self.steps {
            for i in 0..self.series {
                out.extend_from_slice(self.state(i, t));
            }
        }
        out
    }

    /// Places the batch on a tape as constants.
    pub fn bind(&self, tape: &mut Tape) -> BatchVars {
        let (b, n, steps) = (self.series, self.channels, self.steps);
        let all = tape.constant(RealArray::from_parts(vec![steps * b, n], self.time_major(0)));
        let anchors = tape.constant(RealArray::from_parts(vec![b, n], self.time_major(0)[..b * n].to_vec()));
        let future = tape.constant(RealArray::from_parts(vec![(steps - 1) * b, n], self.time_major(1)));
        BatchVars { all, anchors, future, series: b, horizon: steps - 1 }
    }
}

/// Batch constants on a tape, all row-stacked time-major (`row = t·B + i`).
#[derive(Clone, Copy, Debug)]
pub struct BatchVars {
    /// Every state, `t = 0…T`: `(T+1)·B × n`.
    pub all: Var,
    /// `t = 0`: `B × n`.
    pub anchors: Var,
    /// `t = 1…T`: `T·B × n`.
    pub future: Var,
    pub series: usize,
    pub horizon: usize,
}
