//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use pathx_core::autoencoder::{backprop_batch, batch_loss, forward_stack, Activation, AutoencoderParams, DenseLayer};
use pathx_core::classify::Mlp;
use pathx_core::numeric::{finite_diff_grad, relative_error, Matrix, Rng};
use pathx_core::slide::Tile;
use pathx_core::stratify::{ClinicalRecord, Dendrogram};
use pathx_core::vit::{LayerNormParams, Linear, VitWeights};

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
/// Denominator floor for relative error, well above finite-difference noise.
pub const GRAD_FLOOR: f64 = 1e-7;

// ---------------------------------------------------------------- gradients

/// Signs of every ReLU pre-activation in a dense stack.
fn relu_pattern(layers: &[DenseLayer], x: &Matrix, out: &mut Vec<bool>) -> Matrix {
    let t = forward_stack(layers, x).unwrap();
    for (l, p) in layers.iter().zip(&t.pre) {
        if l.activation == Activation::Relu {
            out.extend(p.data().iter().map(|&v| v > 0.0));
        }
    }
    t.output().clone()
}

fn ae_kinks(params: &AutoencoderParams, x: &Matrix) -> Vec<bool> {
    let mut pat = Vec::new();
    let z = relu_pattern(&params.encoder, x, &mut pat);
    let xh = relu_pattern(&params.decoder, &z, &mut pat);
    pat.extend(xh.data().iter().zip(x.data()).map(|(a, b)| a > b));
    pat
}

fn mlp_kinks(m: &Mlp, x: &Matrix) -> Vec<bool> {
    let mut pat = Vec::new();
    relu_pattern(&m.layers, x, &mut pat);
    pat
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GradReport {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Compares `analytic` with central differences of `loss`, skipping any
/// coordinate whose ±h probes flip a kink indicator.
fn compare<L, K>(theta: &[f64], analytic: &[f64], loss: L, kinks: K) -> GradReport
where
    L: Fn(&[f64]) -> f64,
    K: Fn(&[f64]) -> Vec<bool>,
{
    let fd = finite_diff_grad(&loss, theta, FD_STEP).unwrap();
    let base = kinks(theta);
    let mut rep = GradReport::default();
    let mut probe = theta.to_vec();
    for i in 0..theta.len() {
        let orig = probe[i];
        probe[i] = orig + FD_STEP;
        let up = kinks(&probe);
        probe[i] = orig - FD_STEP;
        let down = kinks(&probe);
        probe[i] = orig;
        if up != base || down != base {
            rep.skipped += 1;
            continue;
        }
        rep.checked += 1;
        rep.max_rel = rep.max_rel.max(relative_error(analytic[i], fd[i], GRAD_FLOOR));
    }
    rep
}

fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(lo, hi))
}

/// Seeded toy autoencoder with random widths, batch and biases.
pub fn toy_autoencoder(seed: u64) -> (AutoencoderParams, Matrix) {
    let mut rng = Rng::new(seed);
    let input = 3 + rng.index(5);
    let mut sizes = vec![input];
    for _ in 0..1 + rng.index(2) {
        let prev = *sizes.last().unwrap();
        sizes.push(1 + rng.index(prev.max(2)));
    }
    let mut params = AutoencoderParams::initialized(&sizes, &mut rng).unwrap();
    for l in params.layers_mut() {
        for b in &mut l.bias {
            *b = rng.uniform_range(-0.3, 0.3);
        }
    }
    let batch = 1 + rng.index(4);
    (params, random_matrix(&mut rng, batch, input, 0.0, 1.0))
}

pub fn autoencoder_grad_check(seed: u64) -> GradReport {
    let (params, x) = toy_autoencoder(seed);
    let (_, grads) = backprop_batch(&x, &params).unwrap();
    let theta = params.flatten();
    let with = |t: &[f64]| {
        let mut p = params.clone();
        p.unflatten(t).unwrap();
        p
    };
    compare(
        &theta,
        &grads.flatten(),
        |t| batch_loss(&x, &with(t)).unwrap(),
        |t| ae_kinks(&with(t), &x),
    )
}

pub fn toy_mlp(seed: u64) -> (Mlp, Matrix, Vec<usize>) {
    let mut rng = Rng::new(seed);
    let dim = 2 + rng.index(4);
    let hidden = 2 + rng.index(5);
    let classes = 2 + rng.index(3);
    let mut m = Mlp::initialized(dim, hidden, classes, &mut rng);
    for l in &mut m.layers {
        for b in &mut l.bias {
            *b = rng.uniform_range(-0.3, 0.3);
        }
    }
    let batch = 3 + rng.index(4);
    let x = random_matrix(&mut rng, batch, dim, -1.0, 1.0);
    let y = (0..batch).map(|_| rng.index(classes)).collect();
    (m, x, y)
}

pub fn mlp_grad_check(seed: u64) -> GradReport {
    let (m, x, y) = toy_mlp(seed);
    let (_, g) = m.loss_and_grad(&x, &y).unwrap();
    let analytic = Mlp { layers: g }.flatten();
    let with = |t: &[f64]| {
        let mut c = m.clone();
        c.unflatten(t).unwrap();
        c
    };
    compare(
        &m.flatten(),
        &analytic,
        |t| with(t).loss_and_grad(&x, &y).unwrap().0,
        |t| mlp_kinks(&with(t), &x),
    )
}

// ----------------------------------------------------------------- survival

/// Fraction of `times` strictly greater than `t`.
pub fn empirical_survival(times: &[f64], t: f64) -> f64 {
    times.iter().filter(|&&v| v > t).count() as f64 / times.len() as f64
}

pub fn uncensored(times: &[f64]) -> Vec<ClinicalRecord> {
    times
        .iter()
        .enumerate()
        .map(|(i, &t)| ClinicalRecord::new(format!("r{i}"), t, true))
        .collect()
}

// --------------------------------------------------------------- clustering

fn ess(points: &[Vec<f64>], members: &[usize]) -> f64 {
    let d = points[0].len();
    let mut mean = vec![0.0; d];
    for &m in members {
        for (a, b) in mean.iter_mut().zip(&points[m]) {
            *a += b;
        }
    }
    mean.iter_mut().for_each(|v| *v /= members.len() as f64);
    members
        .iter()
        .map(|&m| points[m].iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

/// Greedy Ward by exhaustive search over all cluster pairs, each step
/// picking the merge with the smallest increase in within-cluster sum of
/// squares. Returns the merged member sets and heights `sqrt(2·ΔESS)`.
pub fn ward_oracle(points: &[Vec<f64>]) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 0);
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let mut u = clusters[i].clone();
                u.extend(&clusters[j]);
                let delta = ess(points, &u) - ess(points, &clusters[i]) - ess(points, &clusters[j]);
                if delta < best.0 {
                    best = (delta, i, j);
                }
            }
        }
        let (delta, i, j) = best;
        let b = clusters.remove(j);
        let a = clusters.remove(i);
        let mut sa = a.clone();
        sa.sort();
        let mut sb = b.clone();
        sb.sort();
        out.push((sa, sb, (2.0 * delta).sqrt()));
        let mut u = a;
        u.extend(b);
        clusters.push(u);
    }
    out
}

/// Member sets of each merge in a dendrogram.
pub fn dendrogram_members(d: &Dendrogram) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let mut members: Vec<Vec<usize>> = (0..d.n).map(|i| vec![i]).collect();
    let mut out = Vec::new();
    for m in &d.merges {
        let mut a = members[m.a].clone();
        let mut b = members[m.b].clone();
        a.sort();
        b.sort();
        let mut u = a.clone();
        u.extend(&b);
        members.push(u);
        out.push((a, b, m.height));
    }
    out
}

/// Same merges irrespective of the order of the two children.
pub fn same_merge(x: &(Vec<usize>, Vec<usize>, f64), y: &(Vec<usize>, Vec<usize>, f64)) -> bool {
    (x.0 == y.0 && x.1 == y.1) || (x.0 == y.1 && x.1 == y.0)
}

/// Gaussian blobs with centres on a circle of radius `separation`.
pub fn blobs(rng: &mut Rng, k: usize, sizes: &[usize], separation: f64, spread: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for (g, &n) in sizes.iter().enumerate().take(k) {
        let ang = std::f64::consts::TAU * g as f64 / k as f64;
        let c = [separation * ang.cos(), separation * ang.sin(), 0.0];
        for _ in 0..n {
            pts.push(c.iter().map(|&m| rng.gaussian(m, spread)).collect());
            labels.push(g);
        }
    }
    (pts, labels)
}

// --------------------------------------------------------------------- SHAP

/// Exact Shapley values of `f` at `x` against one baseline, by enumerating
/// all `2^d` coalitions.
pub fn exact_shapley(f: &dyn Fn(&[f64]) -> f64, x: &[f64], baseline: &[f64]) -> Vec<f64> {
    let d = x.len();
    let mut fact = vec![1.0f64; d + 1];
    for i in 1..=d {
        fact[i] = fact[i - 1] * i as f64;
    }
    let value = |mask: usize| {
        let z: Vec<f64> = (0..d).map(|j| if mask >> j & 1 == 1 { x[j] } else { baseline[j] }).collect();
        f(&z)
    };
    let values: Vec<f64> = (0..1usize << d).map(value).collect();
    (0..d)
        .map(|i| {
            let mut phi = 0.0;
            for s in 0..1usize << d {
                if s >> i & 1 == 1 {
                    continue;
                }
                let size = s.count_ones() as usize;
                let w = fact[size] * fact[d - size - 1] / fact[d];
                phi += w * (values[s | 1 << i] - values[s]);
            }
            phi
        })
        .collect()
}

// ---------------------------------------------------------------------- ViT

fn linear(x: &[Vec<f64>], l: &Linear) -> Vec<Vec<f64>> {
    let (inp, out) = (l.weight.rows(), l.weight.cols());
    x.iter()
        .map(|row| {
            (0..out)
                .map(|o| l.bias[o] + (0..inp).map(|i| row[i] * l.weight.get(i, o)).sum::<f64>())
                .collect()
        })
        .collect()
}

fn norm(x: &[Vec<f64>], p: &LayerNormParams, eps: f64) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let d = row.len() as f64;
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / (var + eps).sqrt() * p.gamma[j] + p.beta[j])
                .collect()
        })
        .collect()
}

fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub struct NaiveVit {
    pub feature: Vec<f64>,
    /// `[layer][head][i][j]`
    pub attention: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Step-by-step forward pass with explicit loops.
pub fn naive_vit(tile: &Tile, w: &VitWeights) -> NaiveVit {
    let c = &w.config;
    let (h, p, ch, d) = (c.image_size, c.patch_size, c.channels, c.embed_dim);
    let g = h / p;
    let px = tile.pixels();
    let mut tokens = vec![(0..d).map(|j| w.class_token[j] + w.positional_embedding.get(0, j)).collect::<Vec<f64>>()];
    for pr in 0..g {
        for pc in 0..g {
            let mut flat = Vec::with_capacity(p * p * ch);
            for y in 0..p {
                for x in 0..p {
                    for k in 0..ch {
                        flat.push(px[((pr * p + y) * h + pc * p + x) * ch + k] as f64 / 255.0);
                    }
                }
            }
            let t = 1 + pr * g + pc;
            tokens.push(
                (0..d)
                    .map(|j| {
                        (0..flat.len()).map(|i| flat[i] * w.patch_projection.get(i, j)).sum::<f64>()
                            + w.positional_embedding.get(t, j)
                    })
                    .collect(),
            );
        }
    }
    let n_tok = tokens.len();
    let dk = d / c.num_heads;
    let mut attention = Vec::new();
    for b in &w.blocks {
        let a = norm(&tokens, &b.ln1, c.layer_norm_eps);
        let (q, k, v) = (linear(&a, &b.query), linear(&a, &b.key), linear(&a, &b.value));
        let mut ctx = vec![vec![0.0; d]; n_tok];
        let mut heads = Vec::new();
        for hd in 0..c.num_heads {
            let off = hd * dk;
            let mut probs = Vec::new();
            for i in 0..n_tok {
                let logits: Vec<f64> = (0..n_tok)
                    .map(|j| (0..dk).map(|e| q[i][off + e] * k[j][off + e]).sum::<f64>() / (dk as f64).sqrt())
                    .collect();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let ex: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                let z: f64 = ex.iter().sum();
                let row: Vec<f64> = ex.iter().map(|e| e / z).collect();
                for j in 0..n_tok {
                    for e in 0..dk {
                        ctx[i][off + e] += row[j] * v[j][off + e];
                    }
                }
                probs.push(row);
            }
            heads.push(probs);
        }
        attention.push(heads);
        tokens = add(&tokens, &linear(&ctx, &b.output));
        let m = norm(&tokens, &b.ln2, c.layer_norm_eps);
        let hidden: Vec<Vec<f64>> = linear(&m, &b.fc1)
            .into_iter()
            .map(|r| r.into_iter().map(|x| 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))).collect())
            .collect();
        tokens = add(&tokens, &linear(&hidden, &b.fc2));
    }
    let out = norm(&tokens, &w.final_norm, c.layer_norm_eps);
    NaiveVit {
        feature: out[0].clone(),
        attention,
    }
}

pub fn random_tile(rng: &mut Rng, w: usize, h: usize) -> Tile {
    let mut t = Tile::filled(w, h, [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            t.set_rgb(x, y, [rng.index(256) as u8, rng.index(256) as u8, rng.index(256) as u8]);
        }
    }
    t
}

// ------------------------------------------------------------------ scoring

/// Breadth-first flood fill over an 8-connected mask, returning the number
/// of components with at least `min_area` pixels.
pub fn flood_fill_count(mask: &[bool], w: usize, h: usize, min_area: usize) -> usize {
    let mut seen = vec![false; mask.len()];
    let mut count = 0;
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut area = 0;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if area >= min_area {
            count += 1;
        }
    }
    count
}

pub fn draw_disk(t: &mut Tile, cx: usize, cy: usize, r: usize, rgb: [u8; 3]) {
    let r2 = (r * r) as isize;
    for y in 0..t.height() {
        for x in 0..t.width() {
            let (dx, dy) = (x as isize - cx as isize, y as isize - cy as isize);
            if dx * dx + dy * dy <= r2 {
                t.set_rgb(x, y, rgb);
            }
        }
    }
}
