use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::dataio::{Checkpoint, Normalizer, OptimizerSnapshot, TimeSeriesDataset};
use crate::diffcore::{AdamState, RealArray, Tape};
use crate::koopman::{Ensemble, KoopmanAutoencoder};
use crate::losses::{
    abs_deviation_loss, single_model_loss, variance_loss, variance_values, LossBreakdown, ModelGraph, Objective,
    Regime, TrainingBatch,
};

/// Losses of one optimizer step, evaluated before the update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based index of the step.
    pub step: u64,
    pub loss: LossBreakdown,
    /// Mean over predicted scalars of the biased across-member variance.
    pub ensemble_variance: f64,
}

/// Owns the ensemble, its optimizer and the normalized training series.
pub struct Trainer {
    config: TrainConfig,
    objective: Objective,
    /// Normalized series; windows of `window + 1` states are cut from them.
    data: TimeSeriesDataset,
    window: usize,
    ensemble: Ensemble,
    adam: AdamState,
}

struct MemberPass {
    tape: Tape,
    params: Vec<crate::diffcore::Var>,
    total: crate::diffcore::Var,
    predictions: crate::diffcore::Var,
    values: [f64; 5],
}

impl Trainer {
    /// Fresh members from seeds `seed + j`, normalization fitted on `dataset`.
    pub fn new(config: TrainConfig, dataset: &TimeSeriesDataset) -> Result<Self, TrainError> {
        config.validate()?;
        let normalizer = Normalizer::fit(&Self::training_window(&config, dataset)?);
        let arch = config.architecture(dataset.channels());
        let ensemble =
            Ensemble::random(&arch, config.ensemble_size, config.seed, normalizer, config.regime, config.lambda)?;
        let shapes = arch.param_shapes();
        let all: Vec<&[usize]> =
            (0..config.ensemble_size).flat_map(|_| shapes.iter().map(Vec::as_slice)).collect();
        let adam = AdamState::new(config.adam, &all)?;
        Self::assemble(config, dataset, ensemble, adam)
    }

    /// Continues the run recorded in `checkpoint`, which must carry its
    /// configuration and optimizer state.
    pub fn resume(checkpoint: &Checkpoint, dataset: &TimeSeriesDataset) -> Result<Self, TrainError> {
        let config: TrainConfig = match &checkpoint.config {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| TrainError::Config(e.to_string()))?,
            None => return Err(TrainError::Config("checkpoint has no training configuration".into())),
        };
        config.validate()?;
        let snapshot = checkpoint
            .optimizer
            .as_ref()
            .ok_or_else(|| TrainError::Config("checkpoint has no optimizer state".into()))?;
        let ensemble = checkpoint.to_ensemble()?;
        if ensemble.architecture() != &config.architecture(dataset.channels()) {
            return Err(TrainError::Config("checkpoint architecture does not match the dataset".into()));
        }
        let shapes = ensemble.architecture().param_shapes();
        let split = |blobs: &[Vec<f64>]| -> Vec<RealArray> {
            blobs
                .iter()
                .flat_map(|flat| {
                    let mut offset = 0;
                    shapes
                        .iter()
                        .map(|s| {
                            let len: usize = s.iter().product();
                            let arr = RealArray::from_parts(s.clone(), flat[offset..offset + len].to_vec());
                            offset += len;
                            arr
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        };
        let adam = AdamState::from_parts(config.adam, snapshot.step, split(&snapshot.first), split(&snapshot.second))?;
        Self::assemble(config, dataset, ensemble, adam)
    }

    fn training_window(config: &TrainConfig, dataset: &TimeSeriesDataset) -> Result<TimeSeriesDataset, TrainError> {
        let steps = config.train_horizon.unwrap_or(dataset.steps());
        if steps > dataset.steps() {
            return Err(TrainError::Config(format!(
                "train_horizon {steps} exceeds the {} steps in the dataset",
                dataset.steps()
            )));
        }
        let keep = if config.random_windows { dataset.steps() } else { steps };
        let all: Vec<usize> = (0..dataset.series()).collect();
        Ok(dataset.subset(&all, keep)?)
    }

    fn assemble(
        config: TrainConfig,
        dataset: &TimeSeriesDataset,
        ensemble: Ensemble,
        adam: AdamState,
    ) -> Result<Self, TrainError> {
        let data = ensemble.normalizer().apply_dataset(&Self::training_window(&config, dataset)?)?;
        let window = config.train_horizon.unwrap_or(dataset.steps());
        Ok(Self { objective: config.objective(), config, data, window, ensemble, adam })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    /// Optimizer steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.adam.step_count()
    }

    pub fn is_done(&self) -> bool {
        self.step_count() >= self.config.steps
    }

    fn batches_per_epoch(&self) -> usize {
        self.data.series().div_ceil(self.config.batch_size.min(self.data.series()))
    }

    /// Series indices of the batch used at 0-based step `step`. Each epoch is
    /// a fresh permutation, so batches never repeat a series within an epoch.
    pub fn batch_indices(&self, step: u64) -> Vec<usize> {
        let per_epoch = self.batches_per_epoch() as u64;
        let (epoch, slot) = (step / per_epoch, (step % per_epoch) as usize);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch);
        let mut order: Vec<usize> = (0..self.data.series()).collect();
        order.shuffle(&mut rng);
        let size = self.config.batch_size.min(order.len());
        order[slot * size..((slot + 1) * size).min(order.len())].to_vec()
    }

    /// Window start per batch slot: 0, or uniform when random windows are on.
    fn window_offsets(&self, step: u64, count: usize) -> Vec<usize> {
        let slack = self.data.steps() - self.window;
        if !self.config.random_windows || slack == 0 {
            return vec![0; count];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed_0ff5);
        rng.set_stream(step);
        (0..count).map(|_| rng.random_range(0..=slack)).collect()
    }

    /// Normalized training batch for the given series and window starts.
    pub fn batch(&self, indices: &[usize], offsets: &[usize]) -> Result<TrainingBatch, TrainError> {
        let n = self.data.channels();
        let len = (self.window + 1) * n;
        let data = indices
            .iter()
            .zip(offsets)
            .flat_map(|(&i, &o)| self.data.series_data(i)[o * n..o * n + len].iter().copied())
            .collect();
        Ok(TrainingBatch::new(indices.len(), self.window + 1, n, data)?)
    }

    /// The batch used at 0-based step `step`.
    pub fn batch_for_step(&self, step: u64) -> Result<TrainingBatch, TrainError> {
        let indices = self.batch_indices(step);
        self.batch(&indices, &self.window_offsets(step, indices.len()))
    }

    /// Loss breakdown, ensemble variance and per-member gradients on `batch`.
    pub fn gradients(&self, batch: &TrainingBatch) -> Result<(LossBreakdown, f64, Vec<Vec<RealArray>>), TrainError> {
        let objective = self.objective;
        let norm = objective.norm();
        let passes = self
            .ensemble
            .members()
            .par_iter()
            .map(|model| -> Result<MemberPass, TrainError> {
                let mut tape = Tape::new();
                let bound = model.bind(&mut tape, "m");
                let bv = batch.bind(&mut tape);
                let mut graph = ModelGraph::new(&bound, &bv);
                let vars = single_model_loss(&mut tape, &mut graph, objective.alpha, norm)?;
                let v = |x| tape.value(x).data()[0];
                let values = [v(vars.pred), v(vars.ae), v(vars.lin), v(vars.orth), v(vars.total)];
                Ok(MemberPass { params: bound.params(), total: vars.total, predictions: vars.predictions, values, tape })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let m = passes.len();
        let w = objective.member_weight(m);
        let cw = objective.coupling_weight();
        let mut coupling_tape = Tape::new();
        let pred_vars: Vec<_> = passes
            .iter()
            .enumerate()
            .map(|(j, p)| coupling_tape.param(format!("p{j}"), p.tape.value(p.predictions).clone()))
            .collect();
        let coupling = match objective.regime {
            Regime::CrpsProxy => abs_deviation_loss(&mut coupling_tape, &pred_vars)?,
            _ => variance_loss(&mut coupling_tape, &pred_vars)?,
        };
        let coupling_value = coupling_tape.value(coupling).data()[0];
        let upstream: Option<Vec<RealArray>> = if cw != 0.0 {
            let g = coupling_tape.backward(coupling)?;
            Some(
                pred_vars
                    .iter()
                    .map(|v| {
                        let mut gj = g.wrt(*v);
                        gj.data_mut().iter_mut().for_each(|x| *x *= cw);
                        gj
                    })
                    .collect(),
            )
        } else {
            None
        };

        let grads = passes
            .par_iter()
            .enumerate()
            .map(|(j, p)| -> Result<Vec<RealArray>, TrainError> {
                let shape = p.tape.value(p.total).shape().to_vec();
                let mut seeds = vec![(p.total, RealArray::from_parts(shape, vec![w]))];
                if let Some(up) = &upstream {
                    seeds.push((p.predictions, up[j].clone()));
                }
                let g = p.tape.backward_seeded(&seeds)?;
                Ok(p.params.iter().map(|v| g.wrt(*v)).collect())
            })
            .collect::<Result<Vec<_>, _>>()?;

        let agg = |k: usize| passes.iter().map(|p| w * p.values[k]).sum::<f64>();
        let (var, abs_dev) = match objective.regime {
            Regime::CrpsProxy => (0.0, coupling_value),
            _ => (coupling_value, 0.0),
        };
        let total = agg(4) + cw * coupling_value;
        let loss = LossBreakdown {
            pred: agg(0),
            ae: agg(1),
            lin: agg(2),
            orth: agg(3),
            var,
            abs_dev,
            total,
            alpha: objective.alpha,
            lambda: cw,
        };
        let preds: Vec<&[f64]> = passes.iter().map(|p| p.tape.value(p.predictions).data()).collect();
        let scalars = preds[0].len().max(1) as f64;
        let ensemble_variance = -variance_values(&preds) / scalars;
        Ok((loss, ensemble_variance, grads))
    }

    /// One optimizer step. On a non-finite loss or gradient the parameters are
    /// left untouched and an error is returned.
    pub fn step(&mut self) -> Result<StepRecord, TrainError> {
        let step = self.step_count();
        let batch = self.batch_for_step(step)?;
        let (loss, ensemble_variance, grads) = self.gradients(&batch)?;
        let finite = loss.total.is_finite()
            && ensemble_variance.is_finite()
            && grads.iter().flatten().all(|g| g.data().iter().all(|v| v.is_finite()));
        if !finite {
            return Err(TrainError::NonFinite { step });
        }
        let flat: Vec<RealArray> = grads.into_iter().flatten().collect();
        let mut params: Vec<&mut RealArray> =
            self.ensemble.members_mut().iter_mut().flat_map(KoopmanAutoencoder::params_mut).collect();
        self.adam.step(&mut params, &flat)?;
        if !params.iter().all(|p| p.is_finite()) {
            return Err(TrainError::NonFinite { step });
        }
        Ok(StepRecord { step: step + 1, loss, ensemble_variance })
    }

    /// Runs until the configured step count, passing every record to `on_step`.
    pub fn run(&mut self, mut on_step: impl FnMut(&StepRecord)) -> Result<(), TrainError> {
        while !self.is_done() {
            let record = self.step()?;
            on_step(&record);
        }
        Ok(())
    }

    /// Snapshot of the current state, including optimizer moments and config.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_ensemble(&self.ensemble, self.config.alpha, self.config.seed, self.step_count());
        let per_member = self.ensemble.architecture().param_shapes().len();
        let join = |arrays: &[RealArray]| -> Vec<Vec<f64>> {
            arrays.chunks(per_member).map(|c| c.iter().flat_map(|a| a.data().iter().copied()).collect()).collect()
        };
        ck.optimizer = Some(OptimizerSnapshot {
            step: self.adam.step_count(),
            first: join(self.adam.first_moments()),
            second: join(self.adam.second_moments()),
        });
        ck.config = Some(serde_json::to_value(&self.config).expect("config serializes"));
        ck
    }
}
