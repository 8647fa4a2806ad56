use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{squared_euclidean, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub entropy_tolerance: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            entropy_tolerance: 1e-5,
            seed: 0,
        }
    }
}

impl TsneConfig {
    /// Largest feasible perplexity for `n` points, slightly below `(n − 1)/3`.
    pub fn max_perplexity(n: usize) -> f64 {
        0.999 * (n as f64 - 1.0) / 3.0
    }

    pub fn clamped(&self, n: usize) -> Self {
        Self {
            perplexity: self.perplexity.min(Self::max_perplexity(n)),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affinities {
    /// Row-normalized `p_{j|i}`.
    pub conditional: Matrix,
    /// Symmetrized `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
    pub joint: Matrix,
    /// `2^H(P_i)` per row after bisection.
    pub perplexity: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub coords: Vec<[f64; 2]>,
    pub initial_kl: f64,
    pub final_kl: f64,
}

/// Conditional row for precision `beta`; returns `(probs, entropy in nats)`.
fn row_probs(dists: &[f64], skip: usize, beta: f64) -> (Vec<f64>, f64) {
    let dmin = dists
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != skip)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = dists
        .iter()
        .enumerate()
        .map(|(j, &d)| if j == skip { 0.0 } else { (-(d - dmin) * beta).exp() })
        .collect();
    let sum: f64 = p.iter().sum();
    let mut weighted = 0.0;
    for (j, v) in p.iter_mut().enumerate() {
        *v /= sum;
        if j != skip {
            weighted += *v * (dists[j] - dmin);
        }
    }
    (p, sum.ln() + beta * weighted)
}

fn solve_row(dists: &[f64], i: usize, target_entropy: f64, tol: f64) -> (Vec<f64>, f64, f64) {
    let mut beta = 1.0;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut p, mut h) = row_probs(dists, i, beta);
    for _ in 0..200 {
        let diff = h - target_entropy;
        if diff.abs() < tol {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = if lo.is_finite() { 0.5 * (beta + lo) } else { beta / 2.0 };
        }
        (p, h) = row_probs(dists, i, beta);
    }
    (p, h, beta)
}

/// Index of the first row bitwise equal to each row.
fn representatives(vectors: &[Vec<f64>]) -> Vec<usize> {
    let mut first: HashMap<Vec<u64>, usize> = HashMap::new();
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| *first.entry(v.iter().map(|x| x.to_bits()).collect()).or_insert(i))
        .collect()
}

/// Gaussian input affinities with per-point bandwidth found by bisection.
pub fn input_affinities(vectors: &[Vec<f64>], perplexity: f64, tol: f64) -> Result<Affinities> {
    let n = vectors.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!("t-SNE needs at least 4 points, got {n}")));
    }
    if !(perplexity > 0.0) || perplexity >= (n as f64 - 1.0) / 3.0 {
        return Err(Error::InvalidArgument(format!(
            "perplexity {perplexity} infeasible for {n} points (must be below {})",
            (n as f64 - 1.0) / 3.0
        )));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::dims("t-SNE input", dim, v.len()));
    }
    let target = perplexity.ln();
    let reps = representatives(vectors);
    let solved: Vec<Option<(Vec<f64>, f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (reps[i] == i).then(|| {
                let d: Vec<f64> = vectors.iter().map(|v| squared_euclidean(&vectors[i], v)).collect();
                solve_row(&d, i, target, tol)
            })
        })
        .collect();
    // A duplicate's row is its representative's with the two self slots swapped.
    let rows: Vec<(Vec<f64>, f64, f64)> = (0..n)
        .map(|i| {
            let r = reps[i];
            let (mut p, h, b) = solved[r].clone().expect("representative solved");
            p.swap(i, r);
            (p, h, b)
        })
        .collect();
    let mut conditional = Matrix::zeros(n, n);
    let mut perp = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    for (i, (p, h, b)) in rows.into_iter().enumerate() {
        conditional.row_mut(i).copy_from_slice(&p);
        perp.push(h.exp());
        beta.push(b);
    }
    let joint = Matrix::from_fn(n, n, |i, j| {
        (conditional.get(i, j) + conditional.get(j, i)) / (2.0 * n as f64)
    });
    Ok(Affinities {
        conditional,
        joint,
        perplexity: perp,
        beta,
    })
}

const P_FLOOR: f64 = 1e-12;

/// `(q numerators, Σ num)` for the Student-t kernel.
fn student_t(y: &[[f64; 2]]) -> (Vec<Vec<f64>>, f64) {
    let num: Vec<Vec<f64>> = y
        .par_iter()
        .enumerate()
        .map(|(i, yi)| {
            y.iter()
                .enumerate()
                .map(|(j, yj)| {
                    if i == j {
                        0.0
                    } else {
                        let dx = yi[0] - yj[0];
                        let dy = yi[1] - yj[1];
                        1.0 / (1.0 + dx * dx + dy * dy)
                    }
                })
                .collect()
        })
        .collect();
    let total = num.iter().map(|r| r.iter().sum::<f64>()).sum();
    (num, total)
}

fn kl_divergence(p: &Matrix, y: &[[f64; 2]]) -> f64 {
    let (num, total) = student_t(y);
    let mut kl = 0.0;
    for (i, row) in num.iter().enumerate() {
        for (j, &q) in row.iter().enumerate() {
            if i != j {
                let pij = p.get(i, j).max(P_FLOOR);
                kl += pij * (pij / (q / total).max(P_FLOOR)).ln();
            }
        }
    }
    kl
}

/// Exact t-SNE into two dimensions.
pub fn tsne_embed(vectors: &[Vec<f64>], config: &TsneConfig) -> Result<TsneResult> {
    let aff = input_affinities(vectors, config.perplexity, config.entropy_tolerance)?;
    let n = vectors.len();
    let p = aff.joint;
    // Duplicated rows share their starting point and affinities, so they
    // follow identical trajectories.
    let root = Rng::new(config.seed);
    let mut y: Vec<[f64; 2]> = representatives(vectors)
        .into_iter()
        .map(|r| {
            let mut rng = root.child(r as u64);
            [1e-4 * rng.normal(), 1e-4 * rng.normal()]
        })
        .collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let initial_kl = kl_divergence(&p, &y);
    for iter in 0..config.iterations {
        let exaggeration = if iter < config.exaggeration_iterations {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < config.momentum_switch {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        if iter == config.exaggeration_iterations {
            // The second phase starts with fresh optimizer state.
            update.iter_mut().for_each(|u| *u = [0.0; 2]);
            gains.iter_mut().for_each(|g| *g = [1.0; 2]);
        }
        let (num, total) = student_t(&y);
        let grads: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let q = num[i][j] / total;
                    let coeff = 4.0 * (exaggeration * p.get(i, j).max(P_FLOOR) - q) * num[i][j];
                    g[0] += coeff * (y[i][0] - y[j][0]);
                    g[1] += coeff * (y[i][1] - y[j][1]);
                }
                g
            })
            .collect();
        for i in 0..n {
            for d in 0..2 {
                let g = grads[i][d];
                gains[i][d] = if g * update[i][d] < 0.0 {
                    gains[i][d] + 0.2
                } else {
                    (gains[i][d] * 0.8).max(0.01)
                };
                update[i][d] = momentum * update[i][d] - config.learning_rate * gains[i][d] * g;
                y[i][d] += update[i][d];
            }
        }
        let mean = y.iter().fold([0.0; 2], |m, v| [m[0] + v[0], m[1] + v[1]]);
        for v in &mut y {
            v[0] -= mean[0] / n as f64;
            v[1] -= mean[1] / n as f64;
        }
        if y.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::NonFinite(format!("t-SNE coordinates at iteration {iter}")));
        }
    }
    let final_kl = kl_divergence(&p, &y);
    Ok(TsneResult {
        coords: y,
        initial_kl,
        final_kl,
    })
}
