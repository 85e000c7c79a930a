use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use koopman_uq::dataio::{generate, GenerateOptions, SystemSpec};
use koopman_uq::diffcore::{RealArray, Tape};
use koopman_uq::koopman::{Architecture, KoopmanAutoencoder};
use koopman_uq::losses::{single_model_loss, ModelGraph, Norm, TrainingBatch};
use koopman_uq::uqmetrics::{crps_ensemble, spread_skill_from_pairs};
use koopman_uq::{Regime, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pseudo(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn bench_tape(c: &mut Criterion) {
    let a = RealArray::matrix(640, 64, pseudo(640 * 64, 1)).unwrap();
    let w = RealArray::matrix(64, 64, pseudo(64 * 64, 2)).unwrap();
    c.bench_function("matmul_t_640x64x64", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let x = tape.constant(a.clone());
            let k = tape.param("w", w.clone());
            let y = tape.matmul_t(x, k).unwrap();
            black_box(tape.value(y).data()[0])
        })
    });

    let arch = Architecture { hidden: vec![16, 16], ..Architecture::new(2, 8) };
    let model = KoopmanAutoencoder::random(&arch, 0).unwrap();
    let batch = TrainingBatch::new(32, 21, 2, pseudo(32 * 21 * 2, 3)).unwrap();
    c.bench_function("single_model_loss_forward_backward", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape, "m");
            let bv = batch.bind(&mut tape);
            let vars = single_model_loss(&mut tape, &mut ModelGraph::new(&bound, &bv), 0.01, Norm::SqL2).unwrap();
            black_box(tape.backward(vars.total).unwrap())
        })
    });
}

fn bench_metrics(c: &mut Criterion) {
    let members = pseudo(16, 4);
    c.bench_function("crps_ensemble_m16", |b| b.iter(|| crps_ensemble(black_box(&members), 0.1).unwrap()));
    let spreads = pseudo(24_000, 5);
    let errors = pseudo(24_000, 6);
    let pairs: Vec<(f64, f64)> = spreads.iter().zip(&errors).map(|(s, e)| (s.abs(), e.abs())).collect();
    c.bench_function("spread_skill_24k", |b| b.iter(|| spread_skill_from_pairs(black_box(&pairs), 20).unwrap()));
}

fn bench_training(c: &mut Criterion) {
    let ds = generate(&SystemSpec::default(), &GenerateOptions::default()).unwrap();
    let config = TrainConfig {
        latent_dim: 8,
        hidden: vec![16, 16],
        regime: Regime::Variance,
        lambda: 0.5,
        steps: 1_000_000,
        train_horizon: Some(20),
        ..TrainConfig::default()
    };
    c.bench_function("ensemble_train_step_m8", |b| {
        b.iter_batched_ref(|| Trainer::new(config.clone(), &ds).unwrap(), |t| t.step().unwrap(), BatchSize::LargeInput)
    });
}

criterion_group!(benches, bench_tape, bench_metrics, bench_training);
criterion_main!(benches);
