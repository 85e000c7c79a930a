use serde::{Deserialize, Serialize};

use super::{single_model_loss, BatchVars, LossBreakdown, LossError, MemberLossVars, ModelGraph, Norm, Regime, TrainingBatch};
use crate::diffcore::{Tape, Var};
use crate::koopman::{BoundModel, KoopmanAutoencoder};

/// Regime and weights of an ensemble objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub regime: Regime,
    pub alpha: f64,
    pub lambda: f64,
    #[serde(default)]
    pub allow_divergent: bool,
}

impl Objective {
    pub fn new(regime: Regime, alpha: f64, lambda: f64) -> Self {
        Self { regime, alpha, lambda, allow_divergent: false }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.alpha >= 0.0) {
            return Err(LossError::NegativeAlpha(self.alpha));
        }
        if !(self.lambda >= 0.0) {
            return Err(LossError::NegativeLambda(self.lambda));
        }
        match self.regime {
            Regime::Independent if self.lambda != 0.0 => Err(LossError::LambdaWithIndependent(self.lambda)),
            Regime::Variance if self.lambda > 1.0 && !self.allow_divergent => {
                Err(LossError::DivergentLambda(self.lambda))
            }
            _ => Ok(()),
        }
    }

    /// Weight of each member's own loss: `1/M`, or 1 for the CRPS proxy.
    pub fn member_weight(&self, members: usize) -> f64 {
        match self.regime {
            Regime::CrpsProxy => 1.0,
            _ => 1.0 / members as f64,
        }
    }

    pub fn norm(&self) -> Norm {
        self.regime.norm()
    }

    /// Weight applied to the coupling term; independent training is `λ = 0`.
    pub fn coupling_weight(&self) -> f64 {
        match self.regime {
            Regime::Independent => 0.0,
            _ => self.lambda,
        }
    }
}

fn mean_of(tape: &mut Tape, preds: &[Var]) -> Result<Var, LossError> {
    if preds.is_empty() {
        return Err(LossError::EmptyEnsemble);
    }
    let w = 1.0 / preds.len() as f64;
    let terms: Vec<(Var, f64)> = preds.iter().map(|p| (*p, w)).collect();
    Ok(tape.combine(&terms)?)
}

/// `−(1/M)·Σⱼ‖x̂ⱼ − x̄‖²`, summed over every row of the stacked predictions.
pub fn variance_loss(tape: &mut Tape, preds: &[Var]) -> Result<Var, LossError> {
    let mean = mean_of(tape, preds)?;
    let mut terms = Vec::with_capacity(preds.len());
    for p in preds {
        let dev = tape.sub(*p, mean)?;
        let sq = tape.square(dev)?;
        terms.push((tape.sum(sq)?, -1.0 / preds.len() as f64));
    }
    Ok(tape.combine(&terms)?)
}

/// `−½·(1/M)·Σⱼ|x̂ⱼ − x̄|`, summed over every scalar.
pub fn abs_deviation_loss(tape: &mut Tape, preds: &[Var]) -> Result<Var, LossError> {
    let mean = mean_of(tape, preds)?;
    let mut terms = Vec::with_capacity(preds.len());
    for p in preds {
        let dev = tape.sub(*p, mean)?;
        let a = tape.abs(dev)?;
        terms.push((tape.sum(a)?, -0.5 / preds.len() as f64));
    }
    Ok(tape.combine(&terms)?)
}

fn member_mean(members: &[&[f64]]) -> Vec<f64> {
    let mut mean = vec![0.0; members.first().map_or(0, |m| m.len())];
    for m in members {
        for (a, v) in mean.iter_mut().zip(m.iter()) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= members.len() as f64);
    mean
}

/// Plain evaluation of [`variance_loss`]: each slice is one member's
/// flattened predictions.
pub fn variance_values(members: &[&[f64]]) -> f64 {
    let mean = member_mean(members);
    let total: f64 = members
        .iter()
        .map(|m| m.iter().zip(&mean).map(|(v, a)| (v - a) * (v - a)).sum::<f64>())
        .sum();
    -total / members.len() as f64
}

/// Plain evaluation of [`abs_deviation_loss`].
pub fn abs_deviation_values(members: &[&[f64]]) -> f64 {
    let mean = member_mean(members);
    let total: f64 = members
        .iter()
        .map(|m| m.iter().zip(&mean).map(|(v, a)| (v - a).abs()).sum::<f64>())
        .sum();
    -0.5 * total / members.len() as f64
}

/// `(1/M)·Σⱼ‖x̂ⱼ − x‖² − λ·(1/M)·Σⱼ‖x̂ⱼ − x̄‖²` for one sample.
///
/// Non-negative for `λ ≤ 1`; unbounded below for `λ > 1`.
pub fn penalized_prediction_gap(members: &[&[f64]], truth: &[f64], lambda: f64) -> f64 {
    let m = members.len() as f64;
    let mean = member_mean(members);
    let mut err = 0.0;
    let mut var = 0.0;
    for x in members {
        for ((v, t), a) in x.iter().zip(truth).zip(&mean) {
            err += (v - t) * (v - t);
            var += (v - a) * (v - a);
        }
    }
    err / m - lambda * var / m
}

/// All ensemble loss nodes; aggregated components follow the regime's
/// member weighting.
#[derive(Clone, Debug)]
pub struct EnsembleLossVars {
    pub members: Vec<MemberLossVars>,
    pub pred: Var,
    pub ae: Var,
    pub lin: Var,
    pub orth: Var,
    /// `L_var` (variance regimes) or `L_abs` (CRPS proxy).
    pub coupling: Var,
    pub total: Var,
}

/// The full ensemble objective as one differentiable scalar.
pub fn ensemble_loss(
    tape: &mut Tape,
    models: &[BoundModel],
    batch: &BatchVars,
    objective: &Objective,
) -> Result<EnsembleLossVars, LossError> {
    objective.validate()?;
    if models.is_empty() {
        return Err(LossError::EmptyEnsemble);
    }
    let members = models
        .iter()
        .map(|m| {
            let mut graph = ModelGraph::new(m, batch);
            single_model_loss(tape, &mut graph, objective.alpha, objective.norm())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let preds: Vec<Var> = members.iter().map(|m| m.predictions).collect();
    let coupling = match objective.regime {
        Regime::CrpsProxy => abs_deviation_loss(tape, &preds)?,
        _ => variance_loss(tape, &preds)?,
    };
    let w = objective.member_weight(models.len());
    let mut agg = |pick: fn(&MemberLossVars) -> Var| -> Result<Var, LossError> {
        let terms: Vec<(Var, f64)> = members.iter().map(|m| (pick(m), w)).collect();
        Ok(tape.combine(&terms)?)
    };
    let pred = agg(|m| m.pred)?;
    let ae = agg(|m| m.ae)?;
    let lin = agg(|m| m.lin)?;
    let orth = agg(|m| m.orth)?;
    let mut terms: Vec<(Var, f64)> = members.iter().map(|m| (m.total, w)).collect();
    terms.push((coupling, objective.coupling_weight()));
    let total = tape.combine(&terms)?;
    Ok(EnsembleLossVars { members, pred, ae, lin, orth, coupling, total })
}

/// Evaluates [`ensemble_loss`] on a fresh tape.
pub fn ensemble_loss_values(
    models: &[KoopmanAutoencoder],
    batch: &TrainingBatch,
    objective: &Objective,
) -> Result<LossBreakdown, LossError> {
    let mut tape = Tape::new();
    let bound: Vec<BoundModel> = models.iter().enumerate().map(|(j, m)| m.bind(&mut tape, &format!("m{j}"))).collect();
    let bv = batch.bind(&mut tape);
    let vars = ensemble_loss(&mut tape, &bound, &bv, objective)?;
    Ok(breakdown(&tape, &vars, objective))
}

pub(crate) fn breakdown(tape: &Tape, vars: &EnsembleLossVars, objective: &Objective) -> LossBreakdown {
    let v = |x: Var| tape.value(x).data()[0];
    let coupling = v(vars.coupling);
    let (var, abs_dev) = match objective.regime {
        Regime::CrpsProxy => (0.0, coupling),
        _ => (coupling, 0.0),
    };
    LossBreakdown {
        pred: v(vars.pred),
        ae: v(vars.ae),
        lin: v(vars.lin),
        orth: v(vars.orth),
        var,
        abs_dev,
        total: v(vars.total),
        alpha: objective.alpha,
        lambda: objective.coupling_weight(),
    }
}
