//! Acceptance gate: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::*;
use pathx_core::attribution::{completeness_gap, gradient_shap, LinearModel, ScalarModel, ShapConfig};
use pathx_core::classify::compute_metrics;
use pathx_core::numeric::Rng;
use pathx_core::pipeline::{generate_cohort, SynthConfig};
use pathx_core::slide::{
    blank_fraction, clarity_laplacian, count_nuclei, nucleus_mask, score_tile, select_best_slice,
    ScoringConfig, Tile,
};
use pathx_core::stratify::{
    adjusted_rand_index, assign_risk_labels, cut_tree, hier_cluster, km_curve, logrank_test,
    pairwise_logrank, ClinicalRecord, ClusterAssignment,
};
use pathx_core::vit::{encode_image, forward, patchify, scale_pixels, VitConfig, VitWeights};

type Check = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn gradients() -> Check {
    let start = Instant::now();
    let (mut ae, mut mlp) = (GradReport::default(), GradReport::default());
    for seed in 0..25 {
        for (acc, r) in [(&mut ae, autoencoder_grad_check(seed)), (&mut mlp, mlp_grad_check(1000 + seed))] {
            acc.max_rel = acc.max_rel.max(r.max_rel);
            acc.checked += r.checked;
            acc.skipped += r.skipped;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(ae.max_rel < GRAD_TOL, "autoencoder max relative error {:e}", ae.max_rel);
    ensure!(mlp.max_rel < GRAD_TOL, "MLP max relative error {:e}", mlp.max_rel);
    ensure!(ae.checked > 0 && mlp.checked > 0, "no coordinates checked");
    ensure!(secs < 30.0, "took {secs:.1}s");
    Ok(format!(
        "25+25 configs, max rel err AE {:.2e} ({} coords, {} kink-skipped), MLP {:.2e} ({} coords), {secs:.2}s",
        ae.max_rel, ae.checked, ae.skipped, mlp.max_rel, mlp.checked
    ))
}

fn survival() -> Check {
    let c = km_curve(&[
        ClinicalRecord::new("a", 1.0, true),
        ClinicalRecord::new("b", 2.0, false),
        ClinicalRecord::new("c", 3.0, true),
    ])
    .map_err(|e| e.to_string())?;
    for (t, s) in [(0.0, 1.0), (0.999, 1.0), (1.0, 2.0 / 3.0), (2.999, 2.0 / 3.0), (3.0, 0.0), (9.0, 0.0)] {
        ensure!(c.survival_at(t) == s, "S({t}) = {} expected {s}", c.survival_at(t));
    }
    let mut rng = Rng::new(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = 1 + rng.index(50);
        let times: Vec<f64> = (0..n).map(|_| (rng.uniform() * 20.0).round()).collect();
        let curve = km_curve(&uncensored(&times)).map_err(|e| e.to_string())?;
        let mut probes: Vec<f64> = times.clone();
        probes.extend(times.iter().map(|t| t + 0.5));
        probes.push(0.0);
        for t in probes {
            worst = worst.max((curve.survival_at(t) - empirical_survival(&times, t)).abs());
        }
    }
    ensure!(worst <= 1e-12, "empirical survival deviation {worst:e}");
    let a = uncensored(&[1.0, 2.0]);
    let b = uncensored(&[3.0, 4.0]);
    let r = logrank_test(&a, &b).map_err(|e| e.to_string())?;
    ensure!((r.statistic - 49.0 / 17.0).abs() < 1e-12, "statistic {}", r.statistic);
    ensure!((r.p_value - 0.0896).abs() < 1e-3, "p {}", r.p_value);
    let sym = logrank_test(&uncensored(&[1.0]), &uncensored(&[1.0])).map_err(|e| e.to_string())?;
    ensure!(sym.p_value == 1.0 && sym.statistic == 0.0, "symmetric p {}", sym.p_value);
    Ok(format!(
        "product-limit exact, 100 empirical datasets max dev {worst:.1e}, log-rank {:.4} p={:.4}, symmetric p=1",
        r.statistic, r.p_value
    ))
}

fn clustering() -> Check {
    let mut runs = 0;
    for k in [2usize, 3] {
        for seed in 0..10 {
            let mut rng = Rng::new(seed * 31 + k as u64);
            let sizes: Vec<usize> = (0..k).map(|_| 20 + rng.index(81)).collect();
            let (pts, truth) = blobs(&mut rng, k, &sizes, 100.0, 1.0);
            let d = hier_cluster(&pts).map_err(|e| e.to_string())?;
            let labels = cut_tree(&d, k).map_err(|e| e.to_string())?;
            let ari = adjusted_rand_index(&labels, &truth).map_err(|e| e.to_string())?;
            ensure!(ari == 1.0, "k={k} seed={seed} ARI {ari}");
            runs += 1;
        }
    }
    let mut rng = Rng::new(77);
    let mut trials = 0;
    for n in 2..=8 {
        for _ in 0..20 {
            let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.normal()).collect()).collect();
            let got = dendrogram_members(&hier_cluster(&pts).map_err(|e| e.to_string())?);
            let want = ward_oracle(&pts);
            for (i, (g, w)) in got.iter().zip(&want).enumerate() {
                ensure!(same_merge(g, w), "n={n} merge {i}: {g:?} vs {w:?}");
                ensure!((g.2 - w.2).abs() < 1e-9 * w.2.max(1.0), "n={n} height {} vs {}", g.2, w.2);
            }
            trials += 1;
        }
    }
    Ok(format!("ARI=1.0 on {runs} blob sets, Ward oracle agrees on {trials} sets with n<=8"))
}

fn shap() -> Check {
    let mut rng = Rng::new(5);
    let mut worst_closed: f64 = 0.0;
    let mut worst_exact: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for trial in 0..40 {
        let d = 1 + rng.index(10);
        let model = LinearModel {
            weights: (0..d).map(|_| rng.uniform_range(-2.0, 2.0)).collect(),
            intercept: rng.normal(),
        };
        let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let nb = 1 + rng.index(3);
        let baselines: Vec<Vec<f64>> = (0..nb).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
        let cfg = ShapConfig { n_samples: 30 + rng.index(40), noise_sigma: 0.0, seed: trial };
        let attr = gradient_shap(&model, &x, &baselines, &cfg).map_err(|e| e.to_string())?;
        let total: usize = attr.baseline_usage.iter().sum();
        let f = |z: &[f64]| model.value(z).unwrap();
        let mut closed = vec![0.0; d];
        let mut exact = vec![0.0; d];
        for (b, &u) in baselines.iter().zip(&attr.baseline_usage) {
            let w = u as f64 / total as f64;
            let s = exact_shapley(&f, &x, b);
            for i in 0..d {
                closed[i] += w * model.weights[i] * (x[i] - b[i]);
                exact[i] += w * s[i];
            }
        }
        for i in 0..d {
            worst_closed = worst_closed.max((attr.phi[i] - closed[i]).abs());
            worst_exact = worst_exact.max((attr.phi[i] - exact[i]).abs());
        }
        worst_gap = worst_gap.max(completeness_gap(&attr, &model, &x, &baselines).map_err(|e| e.to_string())?);
    }
    ensure!(worst_closed < 1e-10, "w(x-b) deviation {worst_closed:e}");
    ensure!(worst_exact < 1e-10, "exhaustive Shapley deviation {worst_exact:e}");
    ensure!(worst_gap < 1e-10, "completeness gap {worst_gap:e}");
    Ok(format!(
        "40 linear models d<=10: |phi-w(x-b)| {worst_closed:.1e}, |phi-shapley| {worst_exact:.1e}, gap {worst_gap:.1e}"
    ))
}

fn vit() -> Check {
    let mut worst: f64 = 0.0;
    let mut worst_row: f64 = 0.0;
    let configs = [VitConfig::toy(), VitConfig { num_layers: 2, num_heads: 4, ..VitConfig::toy() }];
    for (ci, cfg) in configs.iter().enumerate() {
        for seed in 0..5 {
            let mut rng = Rng::new(100 * ci as u64 + seed);
            let w = VitWeights::random(*cfg, &mut rng).map_err(|e| e.to_string())?;
            let tile = random_tile(&mut rng, cfg.image_size, cfg.image_size);
            let got = encode_image(&tile, &w).map_err(|e| e.to_string())?;
            let want = naive_vit(&tile, &w);
            ensure!(got.len() == cfg.embed_dim, "feature length {}", got.len());
            for (a, b) in got.iter().zip(&want.feature) {
                worst = worst.max((a - b).abs());
            }
            let trace = forward(&scale_pixels(&tile), &w).map_err(|e| e.to_string())?;
            for (layer, heads) in trace.attention.iter().enumerate() {
                for (h, p) in heads.iter().enumerate() {
                    for i in 0..p.rows() {
                        worst_row = worst_row.max((p.row(i).iter().sum::<f64>() - 1.0).abs());
                        for j in 0..p.cols() {
                            worst = worst.max((p.get(i, j) - want.attention[layer][h][i][j]).abs());
                        }
                    }
                }
            }
        }
    }
    ensure!(worst < 1e-10, "oracle deviation {worst:e}");
    ensure!(worst_row < 1e-12, "attention row sum deviation {worst_row:e}");
    let mut grid = 0;
    for p in [1usize, 2, 4, 8, 16, 32] {
        for m in 1..=6 {
            let h = p * m;
            let cfg = VitConfig { image_size: h, patch_size: p, ..VitConfig::toy() };
            cfg.validate().map_err(|e| format!("H={h} P={p}: {e}"))?;
            let tile = Tile::filled(h, h, [10, 20, 30]);
            let rows = patchify(&tile, &cfg).map_err(|e| e.to_string())?.rows();
            ensure!(cfg.num_patches() == h * h / (p * p) && rows == cfg.num_patches(), "H={h} P={p}");
            grid += 1;
        }
        if p > 1 {
            let bad = VitConfig { image_size: p * 3 + 1, patch_size: p, ..VitConfig::toy() };
            ensure!(bad.validate().is_err(), "H={} P={p} accepted", bad.image_size);
        }
    }
    Ok(format!("10 forward passes max dev {worst:.1e}, row sums {worst_row:.1e}, {grid} (H,P) pairs"))
}

fn blob_tile(rng: &mut Rng, size: usize) -> Tile {
    let mut t = Tile::filled(size, size, [235, 225, 230]);
    for _ in 0..rng.index(8) {
        let r = 2 + rng.index(6);
        let rgb = [40 + rng.index(60) as u8, 30 + rng.index(40) as u8, 120 + rng.index(80) as u8];
        draw_disk(&mut t, rng.index(size), rng.index(size), r, rgb);
    }
    for _ in 0..rng.index(200) {
        let v = rng.index(256) as u8;
        t.set_rgb(rng.index(size), rng.index(size), [v, v, v]);
    }
    t
}

fn scoring() -> Check {
    let cfg = ScoringConfig::default();
    let mut rng = Rng::new(9);
    let mut tiles = Vec::new();
    for i in 0..100 {
        let t = blob_tile(&mut rng, 48).with_identity("s", i / 10, i % 10);
        let s = score_tile(&t, &cfg);
        let n = count_nuclei(&t, &cfg);
        let expect = n as f64 * clarity_laplacian(&t) - blank_fraction(&t, cfg.brightness_threshold) * cfg.blank_weight;
        ensure!(s.score == expect, "tile {i}: {} vs {expect}", s.score);
        let oracle = flood_fill_count(&nucleus_mask(&t, &cfg), t.width(), t.height(), cfg.min_area);
        ensure!(n == oracle, "tile {i}: {n} nuclei vs flood fill {oracle}");
        tiles.push(t);
    }
    let mut three = Tile::filled(64, 64, [255, 255, 255]);
    for (x, y) in [(12, 12), (48, 16), (30, 48)] {
        draw_disk(&mut three, x, y, 6, [60, 40, 140]);
    }
    let n3 = count_nuclei(&three, &cfg);
    let f3 = flood_fill_count(&nucleus_mask(&three, &cfg), 64, 64, cfg.min_area);
    ensure!(n3 == 3 && f3 == 3, "three-blob tile: {n3} nuclei, flood fill {f3}");
    let white = score_tile(&Tile::filled(32, 32, [255, 255, 255]), &cfg);
    ensure!(white.score == -cfg.blank_weight, "white tile {}", white.score);
    let (best, _) = select_best_slice(&tiles, &cfg).map_err(|e| e.to_string())?;
    let mut arg = 0;
    let mut top = f64::NEG_INFINITY;
    for (i, t) in tiles.iter().enumerate() {
        let s = score_tile(t, &cfg).score;
        if s > top {
            top = s;
            arg = i;
        }
    }
    ensure!(best == tiles[arg], "best slice ({}, {}) vs oracle index {arg}", best.row, best.col);
    Ok(format!("100 tiles exact with flood-fill agreement, 3-blob count 3, white {}, argmax tile {arg}", white.score))
}

fn run_bin(args: &[&str]) -> std::result::Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pathx"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("pathx {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            walk(root, &p, out);
        } else {
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            out.insert(rel, std::fs::read(&p).unwrap());
        }
    }
}

fn without_timing(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    for s in v["stages"].as_array_mut().unwrap() {
        s.as_object_mut().unwrap().remove("seconds");
    }
    v
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(str::to_string).collect()];
    rows.extend(r.records().map(|r| r.unwrap().iter().map(str::to_string).collect()));
    rows
}

fn end_to_end(dirs: &[PathBuf; 2]) -> Check {
    let mut elapsed = Vec::new();
    for (i, d) in dirs.iter().enumerate() {
        let out = d.to_str().unwrap();
        let jobs = if i == 0 { "1" } else { "2" };
        let start = Instant::now();
        run_bin(&["synth", "--k", "3", "--n", "300", "--seed", "7", "--out", out])?;
        run_bin(&["run", "--out", out, "-j", jobs])?;
        elapsed.push(start.elapsed());
    }
    let slowest = elapsed.iter().max().copied().unwrap_or_default();
    ensure!(slowest < Duration::from_secs(300), "run took {:.0}s", slowest.as_secs_f64());
    let lr = csv_rows(&dirs[0].join("stratify/k3/logrank.csv"));
    let pairs: Vec<(String, f64)> = lr[1..]
        .iter()
        .map(|r| (format!("{} vs {}", r[0], r[1]), r[3].parse().unwrap()))
        .collect();
    ensure!(pairs.len() == 3, "{} pairwise tests", pairs.len());
    ensure!(pairs.iter().all(|(_, p)| *p < 0.01), "p-values {pairs:?}");
    let cr = csv_rows(&dirs[0].join("classify/classification_report.csv"));
    let acc: Vec<(String, f64)> = cr[1..].iter().map(|r| (r[0].clone(), r[1].parse().unwrap())).collect();
    ensure!(acc.len() == 3 && acc.iter().all(|(_, a)| *a >= 0.95), "accuracies {acc:?}");
    let (mut a, mut b) = (BTreeMap::new(), BTreeMap::new());
    walk(&dirs[0], &dirs[0], &mut a);
    walk(&dirs[1], &dirs[1], &mut b);
    ensure!(a.keys().eq(b.keys()), "output file sets differ");
    for (k, va) in &a {
        if k == "manifest.json" {
            ensure!(without_timing(va) == without_timing(&b[k]), "manifest checksums differ");
        } else {
            ensure!(*va == b[k], "{k} differs between reruns");
        }
    }
    let p_max = pairs.iter().map(|x| x.1).fold(0.0, f64::max);
    let a_min = acc.iter().map(|x| x.1).fold(1.0, f64::min);
    Ok(format!(
        "{:.0}s per run, max pairwise p {p_max:.1e}, min accuracy {a_min:.3}, {} files byte-identical across -j1/-j2",
        slowest.as_secs_f64(),
        a.len()
    ))
}

fn report_layout(dir: &Path) -> Check {
    let rows = |k: usize| -> Vec<String> {
        std::fs::read_to_string(dir.join(format!("stratify/k{k}/summary.txt")))
            .unwrap()
            .lines()
            .filter(|l| l.starts_with('('))
            .map(|l| l.split('\t').next().unwrap().to_string())
            .collect()
    };
    let k2 = rows(2);
    let k3 = rows(3);
    ensure!(k2 == ["(Low vs High)"], "k=2 rows {k2:?}");
    ensure!(k3 == ["(Low vs Medium)", "(Low vs High)", "(Medium vs High)"], "k=3 rows {k3:?}");
    let cr = csv_rows(&dir.join("classify/classification_report.csv"));
    ensure!(cr[0] == ["method", "accuracy", "macro_f1", "weighted_f1"], "header {:?}", cr[0]);
    let methods: Vec<&str> = cr[1..].iter().map(|r| r[0].as_str()).collect();
    ensure!(methods == ["Logistic Regression", "KNN", "MLP"], "methods {methods:?}");
    Ok(format!("k=2 {k2:?}, k=3 {k3:?}, columns {:?}", &cr[0][1..]))
}

fn null_sanity() -> Check {
    let mut ps = Vec::new();
    for seed in 0..50 {
        let cohort = generate_cohort(&SynthConfig { k: 2, n: 300, seed, separation: 0.0, ..SynthConfig::default() })
            .map_err(|e| e.to_string())?;
        let d = hier_cluster(&cohort.features).map_err(|e| e.to_string())?;
        let labels = cut_tree(&d, 2).map_err(|e| e.to_string())?;
        let a = ClusterAssignment::new(cohort.ids.clone(), labels, 2).map_err(|e| e.to_string())?;
        let ranked = assign_risk_labels(&a, &cohort.clinical).map_err(|e| e.to_string())?;
        let tests = pairwise_logrank(&ranked, &cohort.clinical).map_err(|e| e.to_string())?;
        ps.push(tests[0].p_value);
    }
    ps.sort_by(f64::total_cmp);
    let median = (ps[24] + ps[25]) / 2.0;
    let below = ps.iter().filter(|&&p| p < 0.05).count();
    ensure!((0.2..=0.8).contains(&median), "median p {median:.3}");
    Ok(format!("50 null cohorts, median p {median:.3}, {below} below 0.05"))
}

fn metrics() -> Check {
    let m = compute_metrics(&[1, 1, 1, 0], &[1, 1, 0, 0], 2).map_err(|e| e.to_string())?;
    ensure!((m.accuracy - 0.75).abs() < 1e-12, "accuracy {}", m.accuracy);
    ensure!((m.macro_f1 - 11.0 / 15.0).abs() < 1e-12, "macro {}", m.macro_f1);
    ensure!((m.weighted_f1 - (3.0 * 0.8 + 2.0 / 3.0) / 4.0).abs() < 1e-12, "weighted {}", m.weighted_f1);
    let c1 = &m.per_class[1];
    ensure!((c1.precision - 1.0).abs() < 1e-12 && (c1.recall - 2.0 / 3.0).abs() < 1e-12, "class 1 {c1:?}");
    let mut rng = Rng::new(3);
    for _ in 0..50 {
        let k = 2 + rng.index(4);
        let per = 1 + rng.index(10);
        let truth: Vec<usize> = (0..k * per).map(|i| i % k).collect();
        let pred: Vec<usize> = truth.iter().map(|_| rng.index(k)).collect();
        let r = compute_metrics(&truth, &pred, k).map_err(|e| e.to_string())?;
        ensure!((r.macro_f1 - r.weighted_f1).abs() < 1e-12, "macro {} weighted {}", r.macro_f1, r.weighted_f1);
    }
    Ok(format!(
        "accuracy {:.4}, macro F1 {:.4}, weighted F1 {:.4}, macro = weighted on 50 balanced sets",
        m.accuracy, m.macro_f1, m.weighted_f1
    ))
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dirs = [tmp.path().join("run_a"), tmp.path().join("run_b")];
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Check + '_>)> = vec![
        ("gradient correctness", Box::new(gradients)),
        ("survival oracle equivalence", Box::new(survival)),
        ("clustering recovery", Box::new(clustering)),
        ("SHAP exactness", Box::new(shap)),
        ("ViT forward fidelity", Box::new(vit)),
        ("tile scoring", Box::new(scoring)),
        ("end-to-end planted cohort", Box::new(|| end_to_end(&dirs))),
        ("report layout", Box::new(|| report_layout(&dirs[0]))),
        ("null-hypothesis sanity", Box::new(null_sanity)),
        ("metric arithmetic", Box::new(metrics)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = guarded(check);
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
