mod common;

use common::*;
use pathx_core::classify::{
    compute_metrics, evaluate, predict_knn, stratified_split, ClassifyConfig, LabeledDataset, LogRegConfig,
    LogisticRegression, Mlp, MlpConfig, METHODS,
};
use pathx_core::numeric::Rng;
use proptest::prelude::*;

#[test]
fn hand_computed_binary_metrics() {
    let m = compute_metrics(&[1, 1, 1, 0], &[1, 1, 0, 0], 2).unwrap();
    assert!((m.accuracy - 0.75).abs() < 1e-12);
    assert!((m.per_class[1].precision - 1.0).abs() < 1e-12);
    assert!((m.per_class[1].recall - 2.0 / 3.0).abs() < 1e-12);
    assert!((m.per_class[1].f1 - 0.8).abs() < 1e-12);
    assert!((m.per_class[0].precision - 0.5).abs() < 1e-12);
    assert!((m.per_class[0].recall - 1.0).abs() < 1e-12);
    assert!((m.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-12);
    assert!((m.macro_f1 - 11.0 / 15.0).abs() < 1e-12);
    assert!((m.weighted_f1 - (3.0 * 0.8 + 2.0 / 3.0) / 4.0).abs() < 1e-12);
    assert_eq!(m.confusion, [[1, 0], [1, 2]]);
}

#[test]
fn perfect_predictions_score_one() {
    let y = [0, 2, 1, 1, 2, 0, 0];
    let m = compute_metrics(&y, &y, 3).unwrap();
    assert_eq!((m.accuracy, m.macro_f1, m.weighted_f1), (1.0, 1.0, 1.0));
}

fn labels(k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    prop::collection::vec((0..k, 0..k), 1..60).prop_map(|v| v.into_iter().unzip())
}

proptest! {
    #[test]
    fn metric_bounds_hold((truth, pred) in labels(4)) {
        let m = compute_metrics(&truth, &pred, 4).unwrap();
        prop_assert_eq!(m.confusion.iter().flatten().sum::<usize>(), truth.len());
        for v in [m.accuracy, m.macro_f1, m.weighted_f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let present: Vec<f64> = m.per_class.iter().filter(|c| c.support > 0).map(|c| c.f1).collect();
        let lo = present.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = present.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m.weighted_f1 >= lo - 1e-12 && m.weighted_f1 <= hi + 1e-12);
    }

    #[test]
    fn equal_supports_make_macro_and_weighted_equal(per in 1usize..8, pred in prop::collection::vec(0usize..3, 24)) {
        let truth: Vec<usize> = (0..3 * per).map(|i| i % 3).collect();
        let pred = &pred[..truth.len()];
        let m = compute_metrics(&truth, pred, 3).unwrap();
        prop_assert!((m.macro_f1 - m.weighted_f1).abs() < 1e-12);
    }
}

#[test]
fn metrics_reject_bad_lengths() {
    assert!(compute_metrics(&[0, 1], &[0], 2).is_err());
    assert!(compute_metrics(&[], &[], 2).is_err());
}

/// Repeatedly takes the nearest unused point.
fn knn_oracle(x: &[Vec<f64>], y: &[usize], q: &[f64], k: usize) -> usize {
    let dist = |a: &[f64]| a.iter().zip(q).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    let mut used = vec![false; x.len()];
    let mut votes = vec![0usize; y.iter().max().unwrap() + 1];
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..x.len() {
            if !used[i] && best.is_none_or(|b| dist(&x[i]) < dist(&x[b])) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        used[b] = true;
        votes[y[b]] += 1;
    }
    let top = *votes.iter().max().unwrap();
    votes.iter().position(|&v| v == top).unwrap()
}

fn integer_points() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>, Vec<f64>, usize)> {
    (1usize..20, 1usize..4).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(prop::collection::vec((-5i32..5).prop_map(f64::from), d), n),
            prop::collection::vec(0usize..3, n),
            prop::collection::vec((-5i32..5).prop_map(f64::from), d),
            1..=n,
        )
    })
}

proptest! {
    #[test]
    fn knn_matches_brute_force((x, y, q, k) in integer_points()) {
        prop_assert_eq!(predict_knn(&x, &y, &q, k).unwrap(), knn_oracle(&x, &y, &q, k));
    }

    #[test]
    fn knn_ignores_translation_and_feature_order((x, y, q, k) in integer_points(), shift in -7i32..7, seed in 0u64..100) {
        let base = predict_knn(&x, &y, &q, k).unwrap();
        let t = |v: &[f64]| v.iter().map(|a| a + f64::from(shift)).collect::<Vec<_>>();
        let tx: Vec<Vec<f64>> = x.iter().map(|r| t(r)).collect();
        prop_assert_eq!(predict_knn(&tx, &y, &t(&q), k).unwrap(), base);
        let mut perm: Vec<usize> = (0..q.len()).collect();
        Rng::new(seed).shuffle(&mut perm);
        let p = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let px: Vec<Vec<f64>> = x.iter().map(|r| p(r)).collect();
        prop_assert_eq!(predict_knn(&px, &y, &p(&q), k).unwrap(), base);
    }
}

#[test]
fn knn_examples_and_errors() {
    let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![10.0]];
    let y = vec![1, 1, 1, 0];
    assert_eq!(predict_knn(&x, &y, &[10.0], 1).unwrap(), 0);
    assert_eq!(predict_knn(&x, &y, &[10.0], 4).unwrap(), 1);
    assert!(predict_knn(&[], &[], &[0.0], 1).is_err());
    assert!(predict_knn(&x, &y, &[0.0], 0).is_err());
    assert!(predict_knn(&x, &y, &[0.0], 5).is_err());
}

fn two_blobs(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let (x, y) = blobs(&mut Rng::new(seed), 2, &[n, n], 8.0, 0.5);
    (x.into_iter().map(|r| r[..2].to_vec()).collect(), y)
}

#[test]
fn logreg_separates_separable_blobs() {
    for seed in 0..5 {
        let (x, y) = two_blobs(seed, 30);
        let m = LogisticRegression::fit(&x, &y, 2, &LogRegConfig::default()).unwrap();
        assert_eq!(m.predict(&x).unwrap(), y, "seed {seed}");
    }
}

#[test]
fn logreg_zero_epochs_is_uniform() {
    let (x, y) = two_blobs(1, 10);
    let cfg = LogRegConfig {
        epochs: 0,
        ..LogRegConfig::default()
    };
    let p = LogisticRegression::fit(&x, &y, 2, &cfg).unwrap().predict_proba(&x).unwrap();
    assert!(p.data().iter().all(|&v| v == 0.5));
}

#[test]
fn logreg_decision_ignores_a_common_score_offset() {
    let mut rng = Rng::new(60);
    let (x, y, _) = (0..3).fold((Vec::new(), Vec::new(), ()), |(mut x, mut y, _), c| {
        for _ in 0..15 {
            x.push((0..3).map(|_| rng.normal() + c as f64).collect::<Vec<f64>>());
            y.push(c);
        }
        (x, y, ())
    });
    let m = LogisticRegression::fit(&x, &y, 3, &LogRegConfig::default()).unwrap();
    let base = m.predict(&x).unwrap();
    let before = m.predict_proba(&x).unwrap();
    for offset in [-50.0, 3.5, 1e3] {
        let mut shifted = m.clone();
        shifted.bias.iter_mut().for_each(|b| *b += offset);
        assert_eq!(shifted.predict(&x).unwrap(), base);
        let after = shifted.predict_proba(&x).unwrap();
        for (a, b) in before.data().iter().zip(after.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn single_class_training_is_rejected() {
    let x = vec![vec![0.0], vec![1.0]];
    assert!(LogisticRegression::fit(&x, &[0, 0], 1, &LogRegConfig::default()).is_err());
    assert!(Mlp::fit(&x, &[1, 1], 2, &MlpConfig::default()).is_err());
}

#[test]
fn mlp_solves_xor_deterministically() {
    let x = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
    let y = vec![0, 1, 1, 0];
    let cfg = MlpConfig {
        hidden: 8,
        epochs: 2000,
        ..MlpConfig::default()
    };
    let m = Mlp::fit(&x, &y, 2, &cfg).unwrap();
    assert_eq!(m.predict(&x).unwrap(), y);
    assert_eq!(Mlp::fit(&x, &y, 2, &cfg).unwrap(), m);
}

proptest! {
    #[test]
    fn stratified_split_is_a_seeded_partition(
        counts in prop::collection::vec(1usize..30, 2..4),
        fraction in 0.0f64..0.9,
        seed in 0u64..1000,
    ) {
        let mut y: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        Rng::new(seed).shuffle(&mut y);
        let s = stratified_split(&y, fraction, seed).unwrap();
        prop_assert_eq!(&s, &stratified_split(&y, fraction, seed).unwrap());
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).cloned().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..y.len()).collect::<Vec<_>>());
        for (c, &n) in counts.iter().enumerate() {
            let in_test = s.test.iter().filter(|&&i| y[i] == c).count() as f64;
            prop_assert!((in_test - fraction * n as f64).abs() <= 1.0);
        }
    }
}

#[test]
fn evaluation_reports_every_method_deterministically() {
    let (x, y) = blobs(&mut Rng::new(61), 3, &[20, 20, 20], 6.0, 1.0);
    let names: Vec<String> = y.iter().map(|&c| ["high", "low", "mid"][c].to_string()).collect();
    let data = LabeledDataset::from_names(x, &names).unwrap();
    let cfg = ClassifyConfig {
        seed: 3,
        ..ClassifyConfig::default()
    };
    let e = evaluate(&data, &cfg).unwrap();
    assert_eq!(e.class_names, ["high", "low", "mid"]);
    let methods: Vec<&str> = e.results.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, METHODS);
    assert_eq!(e.split.test.len(), 12);
    for r in &e.results {
        assert_eq!(r.predictions.len(), 12);
        assert!(r.metrics.accuracy > 0.9, "{} {}", r.method, r.metrics.accuracy);
    }
    assert_eq!(evaluate(&data, &cfg).unwrap(), e);
}
