#![allow(dead_code)]

use koopman_uq::diffcore::{grad_check, RealArray, Tape, Var};
use koopman_uq::koopman::{Architecture, BoundModel, KoopmanAutoencoder, Mlp};
use koopman_uq::losses::{
    abs_deviation_loss, ae_loss, ensemble_loss, lin_loss, orth_loss, pred_loss, single_model_loss, variance_loss,
    ModelGraph, Norm, Objective, Regime, TrainingBatch,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small random problem: `n ≤ 4`, `d ≤ 6`, `T ≤ 5`, `B ≤ 3`, `M ≤ 4`.
pub struct Instance {
    pub arch: Architecture,
    pub models: Vec<KoopmanAutoencoder>,
    pub batch: TrainingBatch,
    pub lambda: f64,
    pub alpha: f64,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let n = r.random_range(1..=4);
    let d = r.random_range(1..=6);
    let t = r.random_range(1..=5);
    let b = r.random_range(1..=3);
    let m = r.random_range(1..=4);
    let hidden = vec![r.random_range(2..=5)];
    let arch = Architecture { n, d, hidden, activation: koopman_uq::Activation::Tanh };
    let models = (0..m)
        .map(|_| {
            let base = KoopmanAutoencoder::random(&arch, r.random()).unwrap();
            let mut flat = base.flatten();
            let k0 = flat.len() - d * d;
            for v in &mut flat[k0..] {
                *v += r.random_range(-0.4..0.4);
            }
            for v in &mut flat[..k0] {
                *v += r.random_range(-0.2..0.2);
            }
            KoopmanAutoencoder::from_flat(&arch, &flat).unwrap()
        })
        .collect();
    let data = (0..b * (t + 1) * n).map(|_| r.random_range(-1.5..1.5)).collect();
    let batch = TrainingBatch::new(b, t + 1, n, data).unwrap();
    Instance { arch, models, batch, lambda: r.random_range(0.0..1.0), alpha: r.random_range(0.0..0.1) }
}

/// Naive dense layer stack, written independently of the tape kernels.
pub fn naive_mlp(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let last = mlp.layers.len() - 1;
    for (l, layer) in mlp.layers.iter().enumerate() {
        let (outs, ins) = (layer.weight.shape()[0], layer.weight.shape()[1]);
        let w = layer.weight.data();
        let mut next = vec![0.0; outs];
        for o in 0..outs {
            let mut acc = layer.bias.data()[o];
            for i in 0..ins {
                acc += w[o * ins + i] * h[i];
            }
            next[o] = if l == last { acc } else { mlp.activation.apply(acc) };
        }
        h = next;
    }
    h
}

pub fn naive_k_power(model: &KoopmanAutoencoder, z: &[f64], tau: usize) -> Vec<f64> {
    let d = z.len();
    let k = model.k().data();
    let mut cur = z.to_vec();
    for _ in 0..tau {
        let mut next = vec![0.0; d];
        for r in 0..d {
            for c in 0..d {
                next[r] += k[r * d + c] * cur[c];
            }
        }
        cur = next;
    }
    cur
}

pub fn naive_dist(a: &[f64], b: &[f64], norm: Norm) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| match norm {
            Norm::SqL2 => (x - y) * (x - y),
            Norm::L1 => (x - y).abs(),
        })
        .sum()
}

pub fn naive_prediction(model: &KoopmanAutoencoder, x0: &[f64], tau: usize) -> Vec<f64> {
    let z0 = naive_mlp(model.encoder(), x0);
    naive_mlp(model.decoder(), &naive_k_power(model, &z0, tau))
}

pub fn naive_pred(model: &KoopmanAutoencoder, batch: &TrainingBatch, norm: Norm) -> f64 {
    let mut total = 0.0;
    for i in 0..batch.series() {
        for tau in 1..=batch.horizon() {
            total += naive_dist(batch.state(i, tau), &naive_prediction(model, batch.state(i, 0), tau), norm);
        }
    }
    total
}

pub fn naive_ae(model: &KoopmanAutoencoder, batch: &TrainingBatch, norm: Norm) -> f64 {
    let mut total = 0.0;
    for i in 0..batch.series() {
        for t in 0..=batch.horizon() {
            let x = batch.state(i, t);
            total += naive_dist(x, &naive_mlp(model.decoder(), &naive_mlp(model.encoder(), x)), norm);
        }
    }
    total
}

pub fn naive_lin(model: &KoopmanAutoencoder, batch: &TrainingBatch, norm: Norm) -> f64 {
    let mut total = 0.0;
    for i in 0..batch.series() {
        let z0 = naive_mlp(model.encoder(), batch.state(i, 0));
        for tau in 1..=batch.horizon() {
            let target = naive_mlp(model.encoder(), batch.state(i, tau));
            total += naive_dist(&target, &naive_k_power(model, &z0, tau), norm);
        }
    }
    total
}

pub fn naive_orth(model: &KoopmanAutoencoder) -> f64 {
    let k = model.k().data();
    let d = model.architecture().d;
    let mut total = 0.0;
    for r in 0..d {
        for c in 0..d {
            let mut dot = 0.0;
            for i in 0..d {
                dot += k[r * d + i] * k[c * d + i];
            }
            let e = dot - if r == c { 1.0 } else { 0.0 };
            total += e * e;
        }
    }
    total
}

/// Member predictions flattened per member, series-major `(i, τ, c)`.
pub fn naive_member_predictions(models: &[KoopmanAutoencoder], batch: &TrainingBatch) -> Vec<Vec<f64>> {
    models
        .iter()
        .map(|m| {
            let mut out = Vec::new();
            for i in 0..batch.series() {
                for tau in 1..=batch.horizon() {
                    out.extend(naive_prediction(m, batch.state(i, 0), tau));
                }
            }
            out
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

pub const EPS: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
pub enum Op {
    Pred(Norm),
    Ae(Norm),
    Lin(Norm),
    Orth,
    Single(Norm),
    Variance,
    EnsembleVariance,
    AbsDeviation,
    EnsembleCrpsProxy,
}

/// Records `op` for `inst` on a fresh tape and returns the tape, the leaves
/// the loss depends on and the loss node.
fn build(op: Op, inst: &Instance) -> (Tape, Vec<Var>, Var) {
    let mut tape = Tape::new();
    let bound: Vec<BoundModel> =
        inst.models.iter().enumerate().map(|(j, m)| m.bind(&mut tape, &format!("m{j}"))).collect();
    let bv = inst.batch.bind(&mut tape);
    let mut params: Vec<Var> = bound[0].params();
    let loss = match op {
        Op::Pred(norm) => pred_loss(&mut tape, &mut ModelGraph::new(&bound[0], &bv), norm).unwrap(),
        Op::Ae(norm) => {
            params = bound[0].encoder.params().chain(bound[0].decoder.params()).collect();
            ae_loss(&mut tape, &mut ModelGraph::new(&bound[0], &bv), norm).unwrap()
        }
        Op::Lin(norm) => {
            params = bound[0].encoder.params().chain(std::iter::once(bound[0].k)).collect();
            lin_loss(&mut tape, &mut ModelGraph::new(&bound[0], &bv), norm).unwrap()
        }
        Op::Orth => {
            params = vec![bound[0].k];
            orth_loss(&mut tape, bound[0].k).unwrap()
        }
        Op::Single(norm) => {
            single_model_loss(&mut tape, &mut ModelGraph::new(&bound[0], &bv), inst.alpha, norm).unwrap().total
        }
        Op::Variance | Op::AbsDeviation => {
            let rows = inst.batch.series() * inst.batch.horizon();
            let n = inst.batch.channels();
            let mut r = rng(rows as u64 * 31 + inst.models.len() as u64);
            params = (0..inst.models.len().max(2))
                .map(|j| {
                    let data = (0..rows * n).map(|_| rand::Rng::random_range(&mut r, -2.0..2.0)).collect();
                    tape.param(format!("p{j}"), RealArray::matrix(rows, n, data).unwrap())
                })
                .collect();
            if matches!(op, Op::Variance) {
                variance_loss(&mut tape, &params).unwrap()
            } else {
                abs_deviation_loss(&mut tape, &params).unwrap()
            }
        }
        Op::EnsembleVariance | Op::EnsembleCrpsProxy => {
            let regime = if matches!(op, Op::EnsembleVariance) { Regime::Variance } else { Regime::CrpsProxy };
            params = bound.iter().flat_map(BoundModel::params).collect();
            ensemble_loss(&mut tape, &bound, &bv, &Objective::new(regime, inst.alpha, inst.lambda)).unwrap().total
        }
    };
    (tape, params, loss)
}

/// An `|·|` tape whose gradient has an exactly zero coordinate: the signs
/// cancel, and the relative error of that coordinate only measures roundoff.
fn sign_balanced(tape: &Tape, params: &[Var], loss: Var) -> bool {
    if tape.min_abs_input() == f64::INFINITY {
        return false;
    }
    let grads = tape.backward(loss).unwrap();
    params.iter().any(|&p| grads.wrt(p).data().contains(&0.0))
}

/// Grad-checks `op` on 20 random instances away from `|·|` kinks.
pub fn check_op(op: Op) {
    let mut checked = 0;
    let mut seed = 0;
    while checked < 20 {
        let inst = random_instance(1000 + seed);
        seed += 1;
        assert!(seed < 200, "{op:?}: too many kink-adjacent instances");
        let (mut tape, params, loss) = build(op, &inst);
        assert_eq!(tape.output(), Some(loss), "{op:?}: loss must be the last node");
        if tape.min_abs_input() < 10.0 * EPS || sign_balanced(&tape, &params, loss) {
            continue;
        }
        let err = grad_check(&mut tape, &params, EPS);
        assert!(err < GRAD_TOL, "{op:?} seed {}: relative error {err:e}", seed - 1);
        checked += 1;
    }
}

/// The nine loss operations; the data-space terms in both norms.
pub const ALL_OPS: [Op; 13] = [
    Op::Pred(Norm::SqL2),
    Op::Pred(Norm::L1),
    Op::Ae(Norm::SqL2),
    Op::Ae(Norm::L1),
    Op::Lin(Norm::SqL2),
    Op::Lin(Norm::L1),
    Op::Orth,
    Op::Single(Norm::SqL2),
    Op::Single(Norm::L1),
    Op::Variance,
    Op::EnsembleVariance,
    Op::AbsDeviation,
    Op::EnsembleCrpsProxy,
];
