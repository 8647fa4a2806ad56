mod common;

use common::*;
use pathx_core::autoencoder::{
    backprop, backprop_batch, decode, encode, forward_stack, train, Autoencoder, AutoencoderParams,
    TrainConfig,
};
use pathx_core::classify::LogisticRegression;
use pathx_core::Error;
use pathx_core::numeric::{finite_diff_grad, relative_error, Matrix, Rng};
use proptest::prelude::*;

#[test]
fn autoencoder_gradients_match_central_differences() {
    for seed in 0..30 {
        let r = autoencoder_grad_check(seed);
        assert!(r.checked > 0, "seed {seed}: nothing checked");
        assert!(r.max_rel < GRAD_TOL, "seed {seed}: {r:?}");
    }
}

#[test]
fn mlp_gradients_match_central_differences() {
    for seed in 0..30 {
        let r = mlp_grad_check(seed);
        assert!(r.max_rel < GRAD_TOL, "seed {seed}: {r:?}");
    }
}

#[test]
fn logistic_regression_gradient_matches_central_differences() {
    let mut rng = Rng::new(4);
    for _ in 0..20 {
        let (d, k, n) = (1 + rng.index(4), 2 + rng.index(3), 2 + rng.index(6));
        let x = Matrix::from_fn(n, d, |_, _| rng.normal());
        let y: Vec<usize> = (0..n).map(|_| rng.index(k)).collect();
        let mut m = LogisticRegression::zeros(d, k);
        let theta: Vec<f64> = m.flatten().iter().map(|_| rng.normal()).collect();
        m.unflatten(&theta).unwrap();
        let l2 = 1e-2;
        let (_, g) = m.loss_and_grad(&x, &y, l2).unwrap();
        let fd = finite_diff_grad(
            |t| {
                let mut c = m.clone();
                c.unflatten(t).unwrap();
                c.loss_and_grad(&x, &y, l2).unwrap().0
            },
            &theta,
            FD_STEP,
        )
        .unwrap();
        for (a, b) in g.flatten().iter().zip(&fd) {
            assert!(relative_error(*a, *b, GRAD_FLOOR) < GRAD_TOL, "{a} vs {b}");
        }
    }
}

#[test]
fn perfect_reconstruction_has_zero_gradient() {
    let p = AutoencoderParams::zeros(&[4, 2]).unwrap();
    let (loss, g) = backprop(&[0.5; 4], &p).unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.flatten().iter().all(|&v| v == 0.0));
}

#[test]
fn gradient_scales_with_inverse_batch_size() {
    let (p, x) = toy_autoencoder(3);
    let doubled = Matrix::from_fn(x.rows() * 2, x.cols(), |r, c| x.get(r % x.rows(), c));
    let (l1, g1) = backprop_batch(&x, &p).unwrap();
    let (l2, g2) = backprop_batch(&doubled, &p).unwrap();
    assert!((l1 - l2).abs() < 1e-14);
    for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
        assert!((a - b).abs() < 1e-14);
    }
}

fn small_config(epochs: usize, lr: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        learning_rate: lr,
        seed,
        shuffle: true,
        layer_sizes: vec![8, 6, 3],
    }
}

#[test]
fn constant_dataset_loss_halves() {
    let data = vec![vec![0.2, 0.9, 0.4, 0.7, 0.1, 0.6, 0.3, 0.8]; 16];
    let mut p = AutoencoderParams::initialized(&[8, 6, 3], &mut Rng::new(1)).unwrap();
    let trace = train(&data, &mut p, &small_config(300, 1e-2, 1)).unwrap();
    assert!(trace[trace.len() - 1] < 0.5 * trace[0], "{} -> {}", trace[0], trace[trace.len() - 1]);
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    let mut rng = Rng::new(2);
    let data: Vec<Vec<f64>> = (0..10).map(|_| (0..8).map(|_| rng.uniform()).collect()).collect();
    let init = AutoencoderParams::initialized(&[8, 6, 3], &mut Rng::new(3)).unwrap();
    let mut p = init.clone();
    let trace = train(&data, &mut p, &small_config(5, 0.0, 3)).unwrap();
    assert_eq!(p, init);
    assert!(trace.iter().all(|&l| l == trace[0]));
}

#[test]
fn training_is_bit_exact_across_thread_counts() {
    let mut rng = Rng::new(8);
    let data: Vec<Vec<f64>> = (0..40).map(|_| (0..8).map(|_| rng.uniform()).collect()).collect();
    let cfg = small_config(10, 1e-3, 11);
    let fit = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| Autoencoder::fit(&data, &cfg).unwrap())
    };
    let (m1, t1) = fit(1);
    let (m4, t4) = fit(4);
    assert_eq!(t1, t4);
    assert_eq!(m1.params, m4.params);
    assert!(t1.last().unwrap() <= &t1[0]);
}

#[test]
fn initial_pre_activations_are_not_saturated() {
    let mut rng = Rng::new(12);
    let p = AutoencoderParams::initialized(&[1024, 512, 256, 128], &mut rng).unwrap();
    let x = Matrix::from_fn(16, 1024, |_, _| rng.uniform());
    let enc = forward_stack(&p.encoder, &x).unwrap();
    let dec = forward_stack(&p.decoder, enc.output()).unwrap();
    for pre in enc.pre.iter().chain(&dec.pre) {
        let mean_abs = pre.data().iter().map(|v| v.abs()).sum::<f64>() / pre.data().len() as f64;
        assert!(mean_abs < 3.0, "mean |pre| {mean_abs}");
    }
}

#[test]
fn saved_model_round_trips_and_rejects_wrong_width() {
    let mut rng = Rng::new(6);
    let data: Vec<Vec<f64>> = (0..12).map(|_| (0..8).map(|_| rng.uniform() * 50.0).collect()).collect();
    let (m, _) = Autoencoder::fit(&data, &small_config(3, 1e-3, 6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.aenc");
    m.save(&path).unwrap();
    let back = Autoencoder::load(&path).unwrap();
    assert_eq!(back.encode_all(&data).unwrap(), m.encode_all(&data).unwrap());
    assert!(m.encode_raw(&[0.0; 7]).is_err());
    let mut nan = data[0].clone();
    nan[2] = f64::NAN;
    assert!(matches!(m.encode_raw(&nan), Err(Error::NonFinite(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reconstruction_stays_in_unit_interval(seed in 0u64..1000, scale in 0.0f64..50.0) {
        let mut rng = Rng::new(seed);
        let p = AutoencoderParams::initialized(&[6, 4, 2], &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.uniform_range(-scale, scale)).collect();
        let z = encode(&x, &p).unwrap();
        prop_assert_eq!(z.len(), 2);
        let xh = decode(&z, &p).unwrap();
        prop_assert!(xh.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
