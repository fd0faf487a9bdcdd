mod common;

use g2p_core::inverse_map::{analytic_gradient_check, calibrate_scaler, ScaleMode, TrainConfig};
use g2p_core::pipeline::{babble_and_fit, derive_seed, streams, BabbleConfig, NetworkConfig};
use g2p_core::{default_limb_params, Dataset, InverseMap, Phase, Plant};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::least_squares_mse;

fn babble_dataset(seconds: f64, seed: u64) -> (InverseMap, Dataset) {
    let mut plant = Plant::new(default_limb_params(), derive_seed(seed, streams::PLANT), 0.002).unwrap();
    let cfg = BabbleConfig {
        duration: seconds,
        ..BabbleConfig::default()
    };
    let (mut learner, _) = babble_and_fit(&mut plant, &cfg, &NetworkConfig::default(), seed).unwrap();
    (learner.maps.swap_remove(1), learner.datasets.swap_remove(1))
}

#[test]
fn trained_map_is_near_least_squares_on_short_babble() {
    let (map, data) = babble_dataset(60.0, 21);
    assert_eq!(data.len(), 6000);
    let (trained, best) = (map.mse(&data), least_squares_mse(&data));
    assert!(trained <= 1.05 * best, "trained {trained} vs least squares {best}");
}

#[test]
fn planted_affine_map_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scales = [0.6, 0.8, 3.0, 4.0, 150.0, 200.0];
    let a: Vec<[f64; 6]> = (0..3)
        .map(|_| std::array::from_fn(|j| rng.gen_range(-0.05..0.05) / scales[j]))
        .collect();
    let c = [0.5, 0.4, 0.6];
    let mut data = Dataset::per_limb();
    for _ in 0..6000 {
        let x: [f64; 6] = std::array::from_fn(|j| rng.gen_range(-1.0..1.0) * scales[j]);
        let y: [f64; 3] = std::array::from_fn(|k| c[k] + (0..6).map(|j| a[k][j] * x[j]).sum::<f64>());
        data.push(&x, &y, Phase::Babble);
    }
    let mut map = InverseMap::per_limb(6, 2);
    map.set_scaler(calibrate_scaler(&data, ScaleMode::StdDev).unwrap());
    let cfg = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    map.train(&data, &cfg, 3).unwrap();
    let fit = map.collapsed();
    for k in 0..3 {
        assert!((fit.offset[k] - c[k]).abs() < 1e-3, "offset {k}: {} vs {}", fit.offset[k], c[k]);
        for j in 0..6 {
            let got = fit.matrix[k * 6 + j];
            assert!((got - a[k][j]).abs() < 1e-3, "A[{k}][{j}] = {got} vs {}", a[k][j]);
        }
    }
}

#[test]
fn retraining_on_the_same_data_does_not_get_worse() {
    let (mut map, data) = babble_dataset(60.0, 8);
    let before = map.mse(&data);
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let report = map.train(&data, &cfg, 99).unwrap();
    assert!(report.final_mse <= 1.01 * before, "{} vs {before}", report.final_mse);
}

#[test]
fn training_is_bit_reproducible() {
    let (map, data) = babble_dataset(10.0, 4);
    let cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let mut a = map.clone();
    let mut b = map;
    a.train(&data, &cfg, 17).unwrap();
    b.train(&data, &cfg, 17).unwrap();
    assert_eq!(a.params(), b.params());
    assert_eq!(a.adam_state(), b.adam_state());
}

#[test]
fn backprop_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for draw in 0..100 {
        let mut map = InverseMap::per_limb(6, draw);
        for f in map.scaler_mut().factors.iter_mut() {
            *f = rng.gen_range(0.2..5.0);
        }
        for b in map.b1_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        for b in map.b2_mut() {
            *b = rng.gen_range(-0.5..0.5);
        }
        let x: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
        let y: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        worst = worst.max(analytic_gradient_check(&map, &x, &y));
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn network_is_exactly_its_collapsed_affine_map(
        seed in 0u64..1000,
        epochs in 0usize..4,
        x in prop::array::uniform6(-3.0f64..3.0),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Dataset::per_limb();
        for _ in 0..300 {
            let xi: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
            let yi: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
            data.push(&xi, &yi, Phase::Babble);
        }
        let mut map = InverseMap::per_limb(6, seed);
        map.set_scaler(calibrate_scaler(&data, ScaleMode::StdDev).unwrap());
        if epochs > 0 {
            map.train(&data, &TrainConfig { epochs, ..TrainConfig::default() }, seed).unwrap();
        }
        let affine = map.collapsed();
        let y = map.predict_raw(&x);
        for k in 0..3 {
            let z = affine.offset[k] + (0..6).map(|j| affine.matrix[k * 6 + j] * x[j]).sum::<f64>();
            prop_assert!((y[k] - z).abs() < 1e-12, "{} vs {}", y[k], z);
        }
    }
}
