use super::{BatchVars, LossBreakdown, LossError, Norm, TrainingBatch};
use crate::diffcore::{RealArray, Tape, Var};
use crate::koopman::{BoundModel, KoopmanAutoencoder};

/// Intermediates of one model on one batch, built on first use and shared
/// between the loss terms.
pub struct ModelGraph<'a> {
    pub model: &'a BoundModel,
    pub batch: &'a BatchVars,
    encoded: Option<Var>,
    rollout: Option<Var>,
    predictions: Option<Var>,
}

impl<'a> ModelGraph<'a> {
    pub fn new(model: &'a BoundModel, batch: &'a BatchVars) -> Self {
        Self { model, batch, encoded: None, rollout: None, predictions: None }
    }

    /// `φ(x_{i,t})` for every state, `(T+1)·B × d`.
    pub fn encoded(&mut self, tape: &mut Tape) -> Result<Var, LossError> {
        if let Some(v) = self.encoded {
            return Ok(v);
        }
        let v = self.model.encode(tape, self.batch.all)?;
        self.encoded = Some(v);
        Ok(v)
    }

    /// `Kᵗ φ(x_{i,0})` for `τ = 1…T`, stacked `T·B × d`.
    pub fn rollout(&mut self, tape: &mut Tape) -> Result<Var, LossError> {
        if let Some(v) = self.rollout {
            return Ok(v);
        }
        let z0 = self.model.encode(tape, self.batch.anchors)?;
        let steps = self.model.rollout(tape, z0, self.batch.horizon)?;
        let v = tape.concat_rows(&steps)?;
        self.rollout = Some(v);
        Ok(v)
    }

    /// `ψ(Kᵗ φ(x_{i,0}))`, stacked `T·B × n` in the same order as `batch.future`.
    pub fn predictions(&mut self, tape: &mut Tape) -> Result<Var, LossError> {
        if let Some(v) = self.predictions {
            return Ok(v);
        }
        let z = self.rollout(tape)?;
        let v = self.model.decode(tape, z)?;
        self.predictions = Some(v);
        Ok(v)
    }
}

/// `Σ ‖a − b‖²` or `Σ ‖a − b‖₁` over all rows.
pub fn distance(tape: &mut Tape, a: Var, b: Var, norm: Norm) -> Result<Var, LossError> {
    let diff = tape.sub(a, b)?;
    let per = match norm {
        Norm::SqL2 => tape.square(diff)?,
        Norm::L1 => tape.abs(diff)?,
    };
    Ok(tape.sum(per)?)
}

/// Prediction loss: `Σᵢ Σ_{τ=1..T} dist(x_{i,τ}, ψ(Kᵗ φ(x_{i,0})))`.
pub fn pred_loss(tape: &mut Tape, graph: &mut ModelGraph<'_>, norm: Norm) -> Result<Var, LossError> {
    let pred = graph.predictions(tape)?;
    distance(tape, graph.batch.future, pred, norm)
}

/// Auto-encoding loss: `Σᵢ Σ_{t=0..T} dist(x_{i,t}, ψ(φ(x_{i,t})))`.
pub fn ae_loss(tape: &mut Tape, graph: &mut ModelGraph<'_>, norm: Norm) -> Result<Var, LossError> {
    let z = graph.encoded(tape)?;
    let recon = graph.model.decode(tape, z)?;
    distance(tape, graph.batch.all, recon, norm)
}

/// Linearity loss: `Σᵢ Σ_{τ=1..T} dist(φ(x_{i,τ}), Kᵗ φ(x_{i,0}))`.
pub fn lin_loss(tape: &mut Tape, graph: &mut ModelGraph<'_>, norm: Norm) -> Result<Var, LossError> {
    let encoded = graph.encoded(tape)?;
    let b = graph.batch.series;
    let later = tape.slice_rows(encoded, b, (graph.batch.horizon + 1) * b)?;
    let rolled = graph.rollout(tape)?;
    distance(tape, later, rolled, norm)
}

/// Orthogonality penalty `‖K·Kᵀ − I‖²_F`.
pub fn orth_loss(tape: &mut Tape, k: Var) -> Result<Var, LossError> {
    let shape = tape.value(k).shape().to_vec();
    let d = match shape.as_slice() {
        [r, c] if r == c => *r,
        _ => return Err(LossError::NonSquareK(shape)),
    };
    let kkt = tape.matmul_t(k, k)?;
    let eye = tape.constant(RealArray::identity(d));
    let diff = tape.sub(kkt, eye)?;
    let sq = tape.square(diff)?;
    Ok(tape.sum(sq)?)
}

pub fn orth_loss_value(k: &RealArray) -> Result<f64, LossError> {
    let mut tape = Tape::new();
    let kv = tape.constant(k.clone());
    let out = orth_loss(&mut tape, kv)?;
    Ok(tape.value(out).data()[0])
}

/// Per-model loss terms on a tape.
#[derive(Clone, Copy, Debug)]
pub struct MemberLossVars {
    pub pred: Var,
    pub ae: Var,
    pub lin: Var,
    pub orth: Var,
    /// `pred + ae + lin + α·orth`.
    pub total: Var,
    /// Forecasts `T·B × n`, needed by the ensemble coupling terms.
    pub predictions: Var,
}

/// `L = L_pred + L_ae + L_lin + α·L_orth`.
pub fn single_model_loss(
    tape: &mut Tape,
    graph: &mut ModelGraph<'_>,
    alpha: f64,
    norm: Norm,
) -> Result<MemberLossVars, LossError> {
    if !(alpha >= 0.0) {
        return Err(LossError::NegativeAlpha(alpha));
    }
    let pred = pred_loss(tape, graph, norm)?;
    let ae = ae_loss(tape, graph, norm)?;
    let lin = lin_loss(tape, graph, norm)?;
    let orth = orth_loss(tape, graph.model.k)?;
    let total = tape.combine(&[(pred, 1.0), (ae, 1.0), (lin, 1.0), (orth, alpha)])?;
    let predictions = graph.predictions(tape)?;
    Ok(MemberLossVars { pred, ae, lin, orth, total, predictions })
}

/// Evaluates [`single_model_loss`] on a fresh tape.
pub fn single_model_loss_values(
    model: &KoopmanAutoencoder,
    batch: &TrainingBatch,
    alpha: f64,
    norm: Norm,
) -> Result<LossBreakdown, LossError> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, "m");
    let bv = batch.bind(&mut tape);
    let mut graph = ModelGraph::new(&bound, &bv);
    let vars = single_model_loss(&mut tape, &mut graph, alpha, norm)?;
    let v = |x: Var| tape.value(x).data()[0];
    Ok(LossBreakdown {
        pred: v(vars.pred),
        ae: v(vars.ae),
        lin: v(vars.lin),
        orth: v(vars.orth),
        var: 0.0,
        abs_dev: 0.0,
        total: v(vars.total),
        alpha,
        lambda: 0.0,
    })
}
