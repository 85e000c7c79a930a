use std::collections::HashMap;

use koopman_uq::dataio::{decode_dataset, encode_dataset, Checkpoint, Normalizer, TimeSeriesDataset};
use koopman_uq::diffcore::{RealArray, Tape};
use koopman_uq::koopman::{ensemble_forecast, Architecture, Dense, Ensemble, KoopmanAutoencoder, Mlp};
use koopman_uq::losses::{
    ensemble_loss_values, penalized_prediction_gap, variance_values, Objective, Regime, TrainingBatch,
};
use koopman_uq::uqmetrics::{crps_ensemble, crps_integral_oracle, score_forecasts};
use koopman_uq::Activation;
use proptest::prelude::*;

fn members_strategy(max_m: usize, len: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, len), 1..=max_m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn variance_decomposition(members in members_strategy(8, 5), target in prop::collection::vec(-5.0f64..5.0, 5)) {
        let m = members.len() as f64;
        let mean: Vec<f64> = (0..5).map(|c| members.iter().map(|x| x[c]).sum::<f64>() / m).collect();
        let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let lhs = members.iter().map(|x| sq(x, &target)).sum::<f64>() / m;
        let rhs = members.iter().map(|x| sq(x, &mean)).sum::<f64>() / m + sq(&mean, &target);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-300));
    }

    #[test]
    fn penalized_gap_is_nonnegative_up_to_lambda_one(
        members in members_strategy(6, 3),
        truth in prop::collection::vec(-5.0f64..5.0, 3),
        lambda in 0.0f64..=1.0,
    ) {
        let refs: Vec<&[f64]> = members.iter().map(Vec::as_slice).collect();
        prop_assert!(penalized_prediction_gap(&refs, &truth, lambda) >= -1e-12);
    }

    #[test]
    fn sandwich_bound(values in prop::collection::vec(-10.0f64..10.0, 1..=16)) {
        let m = values.len() as f64;
        let mean = values.iter().sum::<f64>() / m;
        let dev = values.iter().map(|v| (v - mean).abs()).sum::<f64>() / m;
        let pair = values.iter().flat_map(|a| values.iter().map(move |b| (a - b).abs())).sum::<f64>() / (m * m);
        prop_assert!(dev <= pair + 1e-12);
        prop_assert!(pair <= 2.0 * dev + 1e-12);
    }

    #[test]
    fn crps_matches_integral_and_is_nonnegative(values in prop::collection::vec(-10.0f64..10.0, 1..=16), truth in -12.0f64..12.0) {
        let c = crps_ensemble(&values, truth).unwrap();
        let oracle = crps_integral_oracle(&values, truth, 1e-3).unwrap();
        prop_assert!(c >= 0.0);
        prop_assert!((c - oracle.exact).abs() <= 1e-9);
        prop_assert!((c - oracle.quadrature).abs() <= 1e-2);
    }

    #[test]
    fn crps_translation_invariance_on_dyadic_grid(
        raw in prop::collection::vec(-64i32..64, 1..=16),
        truth in -64i32..64,
        shift in -1024i32..1024,
    ) {
        // Multiples of 1/8 with a small integer shift: every sum is exact.
        let values: Vec<f64> = raw.iter().map(|v| *v as f64 / 8.0).collect();
        let shifted: Vec<f64> = values.iter().map(|v| v + shift as f64).collect();
        let a = crps_ensemble(&values, truth as f64 / 8.0).unwrap();
        let b = crps_ensemble(&shifted, truth as f64 / 8.0 + shift as f64).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn crps_translation_invariance_general(values in prop::collection::vec(-10.0f64..10.0, 1..=16), truth in -10.0f64..10.0, shift in -100.0f64..100.0) {
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let a = crps_ensemble(&values, truth).unwrap();
        let b = crps_ensemble(&shifted, truth + shift).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + shift.abs()));
    }

    #[test]
    fn crps_permutation_invariance(values in prop::collection::vec(-10.0f64..10.0, 1..=16), truth in -10.0f64..10.0, seed in any::<u64>()) {
        let mut shuffled = values.clone();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        prop_assert_eq!(crps_ensemble(&values, truth).unwrap(), crps_ensemble(&shuffled, truth).unwrap());
    }

    #[test]
    fn zero_crps_iff_members_equal_truth(values in prop::collection::vec(-3.0f64..3.0, 1..=8)) {
        let truth = values[0];
        let c = crps_ensemble(&values, truth).unwrap();
        prop_assert_eq!(c == 0.0, values.iter().all(|v| *v == truth));
    }

    #[test]
    fn normalizer_round_trip(rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 2..40)) {
        let flat: Vec<f64> = rows.concat();
        let norm = Normalizer::fit_rows(&flat, 3);
        let back = norm.invert(&norm.apply(&flat));
        for (a, b) in flat.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        let z = norm.apply(&flat);
        for c in 0..3 {
            let col: Vec<f64> = z.iter().skip(c).step_by(3).copied().collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn dataset_round_trip_is_bitwise(
        series in 1usize..4, steps in 1usize..5, channels in 1usize..4,
        seed in any::<u64>(), dt in 1e-3f64..10.0,
    ) {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let data: Vec<f64> = (0..series * (steps + 1) * channels).map(|_| rand::Rng::random_range(&mut rng, -1e6..1e6)).collect();
        let names = (0..channels).map(|c| format!("ch{c}")).collect();
        let ds = TimeSeriesDataset::new(series, steps, channels, data, names, dt, "p").unwrap();
        let back = decode_dataset(&encode_dataset(&ds), "p").unwrap();
        prop_assert_eq!(back, ds);
    }
}

fn linear_rotation_model(theta: f64, radius: f64) -> KoopmanAutoencoder {
    let arch = Architecture { n: 2, d: 2, hidden: vec![], activation: Activation::Identity };
    let eye = Mlp {
        layers: vec![Dense { weight: RealArray::identity(2), bias: RealArray::zeros(vec![2]) }],
        activation: Activation::Identity,
    };
    let (s, c) = theta.sin_cos();
    let k = RealArray::matrix(2, 2, vec![radius * c, -radius * s, radius * s, radius * c]).unwrap();
    KoopmanAutoencoder::from_parts(arch, eye.clone(), eye, k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rollout_semigroup(theta in -3.0f64..3.0, radius in 0.5f64..=1.0, h1 in 1usize..8, h2 in 1usize..8, z0 in prop::collection::vec(-2.0f64..2.0, 2)) {
        let model = linear_rotation_model(theta, radius);
        let whole = model.rollout_latent(&z0, h1 + h2).unwrap();
        let first = model.rollout_latent(&z0, h1).unwrap();
        let second = model.rollout_latent(first.last().unwrap(), h2).unwrap();
        for (a, b) in whole.iter().zip(first.iter().chain(&second)) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn ensemble_mean_is_member_average(seed in any::<u64>(), m in 1usize..5, x0 in prop::collection::vec(-1.0f64..1.0, 2)) {
        let arch = Architecture { hidden: vec![5], ..Architecture::new(2, 3) };
        let members: Vec<_> = (0..m as u64).map(|j| KoopmanAutoencoder::random(&arch, seed.wrapping_add(j)).unwrap()).collect();
        let dist = ensemble_forecast(&members, &x0, 4).unwrap();
        for t in 0..4 {
            for c in 0..2 {
                let avg = (0..m).map(|j| dist.member(j, t, c)).sum::<f64>() / m as f64;
                prop_assert!((dist.mean(t, c) - avg).abs() <= 1e-12 * avg.abs().max(1.0));
                prop_assert!(dist.spread(t, c) >= 0.0);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise(seed in any::<u64>(), m in 1usize..4, d in 1usize..5) {
        let arch = Architecture { hidden: vec![3, 4], ..Architecture::new(2, d) };
        let norm = Normalizer { mean: vec![0.1, -0.2], std: vec![1.5, 0.3] };
        let ens = Ensemble::random(&arch, m, seed, norm, Regime::CrpsProxy, 1.0).unwrap();
        let ck = Checkpoint::from_ensemble(&ens, 0.01, seed, 3);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        prop_assert!(back.same_payload(&ck));
        prop_assert_eq!(back.to_ensemble().unwrap(), ens);
    }
}

fn random_batch(seed: u64, b: usize, steps: usize, n: usize) -> Vec<f64> {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    (0..b * (steps + 1) * n).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect()
}

#[test]
fn losses_are_invariant_to_member_and_series_order() {
    let arch = Architecture { hidden: vec![5], ..Architecture::new(2, 3) };
    let members: Vec<_> = (0..4).map(|j| KoopmanAutoencoder::random(&arch, 40 + j).unwrap()).collect();
    let data = random_batch(1, 3, 4, 2);
    let batch = TrainingBatch::new(3, 5, 2, data.clone()).unwrap();
    let per = 5 * 2;
    let reversed: Vec<f64> = data.chunks(per).rev().flatten().copied().collect();
    let batch_rev = TrainingBatch::new(3, 5, 2, reversed).unwrap();
    let mut shuffled = members.clone();
    shuffled.swap(0, 3);
    shuffled.swap(1, 2);
    for objective in [
        Objective::new(Regime::Independent, 0.01, 0.0),
        Objective::new(Regime::Variance, 0.01, 0.7),
        Objective::new(Regime::CrpsProxy, 0.01, 1.0),
    ] {
        let base = ensemble_loss_values(&members, &batch, &objective).unwrap();
        for other in [
            ensemble_loss_values(&shuffled, &batch, &objective).unwrap(),
            ensemble_loss_values(&members, &batch_rev, &objective).unwrap(),
        ] {
            for (a, b) in [
                (base.total, other.total),
                (base.pred, other.pred),
                (base.var, other.var),
                (base.abs_dev, other.abs_dev),
            ] {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{objective:?}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn backward_is_linear_and_reproducible() {
    let build = |tape: &mut Tape, which: u8| {
        let x = tape.param("x", RealArray::matrix(2, 2, vec![0.3, -1.1, 0.7, 2.0]).unwrap());
        let w = tape.param("w", RealArray::matrix(2, 2, vec![1.0, 0.5, -0.25, 0.8]).unwrap());
        let h = tape.matmul(x, w).unwrap();
        let a = tape.tanh(h).unwrap();
        let sa = tape.square(a).unwrap();
        let f = tape.sum(sa).unwrap();
        let ab = tape.abs(h).unwrap();
        let g = tape.sum(ab).unwrap();
        match which {
            0 => f,
            1 => g,
            _ => tape.add(f, g).unwrap(),
        }
    };
    let grads = |which: u8| {
        let mut tape = Tape::new();
        let out = build(&mut tape, which);
        tape.backward(out).unwrap()
    };
    let (gf, gg, gs) = (grads(0), grads(1), grads(2));
    for name in ["x", "w"] {
        let (a, b, s) = (gf.named(name).unwrap(), gg.named(name).unwrap(), gs.named(name).unwrap());
        for ((a, b), s) in a.data().iter().zip(b.data()).zip(s.data()) {
            assert!((a + b - s).abs() <= 1e-12 * s.abs().max(1e-300));
        }
        assert_eq!(grads(2).named(name).unwrap(), s);
    }
    let mut tape = Tape::new();
    build(&mut tape, 2);
    let first = tape.value(tape.output().unwrap()).clone();
    let again = tape.forward(&HashMap::new()).unwrap().clone();
    assert_eq!(first, again);
}

#[test]
fn scored_samples_recompute_from_members() {
    let arch = Architecture { hidden: vec![4], ..Architecture::new(2, 3) };
    let members: Vec<_> = (0..5).map(|j| KoopmanAutoencoder::random(&arch, 90 + j).unwrap()).collect();
    let dist = ensemble_forecast(&members, &[0.4, -0.3], 6).unwrap();
    let truth: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
    for s in score_forecasts(&dist, &truth).unwrap() {
        let m = s.members.len() as f64;
        let mean = s.members.iter().sum::<f64>() / m;
        let spread = (s.members.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        assert!((s.spread - spread).abs() < 1e-12);
        assert!((s.error - (mean - s.truth).abs()).abs() < 1e-12);
    }
    let refs: Vec<Vec<f64>> = (0..5).map(|j| (0..12).map(|k| dist.member_data()[j * 12 + k]).collect()).collect();
    let r: Vec<&[f64]> = refs.iter().map(Vec::as_slice).collect();
    assert!(variance_values(&r) <= 0.0);
}
