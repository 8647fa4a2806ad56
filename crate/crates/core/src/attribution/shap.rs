use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{encoder_input_gradient, AutoencoderParams};
use crate::error::{Error, Result};
use crate::numeric::{dot, Rng};

/// Scalar function of a feature vector with an analytic gradient.
pub trait ScalarModel: Sync {
    fn dim(&self) -> usize;
    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.value_and_grad(x)?.0)
    }
}

/// `f(x) = w·x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl ScalarModel for LinearModel {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.weights.len() {
            return Err(Error::dims("linear model input", self.weights.len(), x.len()));
        }
        Ok((dot(&self.weights, x) + self.intercept, self.weights.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum ShapTarget {
    /// Sum of all latent coordinates.
    #[default]
    LatentSum,
    Latent(usize),
}

/// Encoder output reduced to a scalar.
#[derive(Debug, Clone, Copy)]
pub struct EncoderReadout<'a> {
    pub params: &'a AutoencoderParams,
    pub target: ShapTarget,
}

impl ScalarModel for EncoderReadout<'_> {
    fn dim(&self) -> usize {
        self.params.input_dim()
    }

    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let k = self.params.latent_dim();
        let weights: Vec<f64> = match self.target {
            ShapTarget::LatentSum => vec![1.0; k],
            ShapTarget::Latent(i) if i < k => (0..k).map(|j| (j == i) as u8 as f64).collect(),
            ShapTarget::Latent(i) => {
                return Err(Error::InvalidArgument(format!(
                    "latent index {i} out of range for width {k}"
                )))
            }
        };
        let (z, g) = encoder_input_gradient(x, self.params, &weights)?;
        Ok((dot(&z, &weights), g))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapConfig {
    pub n_samples: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            noise_sigma: 0.09,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub case_id: String,
    pub target: ShapTarget,
    pub phi: Vec<f64>,
    /// How many samples drew each baseline.
    pub baseline_usage: Vec<usize>,
    pub n_samples: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Baseline index per sample: consecutive blocks of `m` samples each use
/// every baseline once, in a seeded order.
fn baseline_schedule(m: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = Rng::new(Rng::derive_seed(seed, u64::MAX));
    let mut out = Vec::with_capacity(n);
    let mut block: Vec<usize> = (0..m).collect();
    while out.len() < n {
        block.sort_unstable();
        rng.shuffle(&mut block);
        out.extend(block.iter().take(n - out.len()));
    }
    out
}

/// Expected gradients along noisy paths from baselines to `x`.
pub fn gradient_shap(
    model: &dyn ScalarModel,
    x: &[f64],
    baselines: &[Vec<f64>],
    config: &ShapConfig,
) -> Result<Attribution> {
    let d = model.dim();
    if x.len() != d {
        return Err(Error::dims("SHAP input", d, x.len()));
    }
    if baselines.is_empty() {
        return Err(Error::EmptyInput("SHAP baselines"));
    }
    if let Some(b) = baselines.iter().find(|b| b.len() != d) {
        return Err(Error::dims("SHAP baseline", d, b.len()));
    }
    if config.n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
    }
    if !(config.noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument("noise_sigma must be non-negative".into()));
    }
    let schedule = baseline_schedule(baselines.len(), config.n_samples, config.seed);
    let root = Rng::new(config.seed);
    let contributions: Vec<Vec<f64>> = schedule
        .par_iter()
        .enumerate()
        .map(|(s, &bi)| {
            let mut rng = root.child(s as u64);
            let alpha = rng.uniform();
            let b = &baselines[bi];
            let noisy: Vec<f64> = x
                .iter()
                .map(|&v| {
                    if config.noise_sigma > 0.0 {
                        v + config.noise_sigma * rng.normal()
                    } else {
                        v
                    }
                })
                .collect();
            let point: Vec<f64> = b.iter().zip(&noisy).map(|(b, v)| b + alpha * (v - b)).collect();
            let (_, g) = model.value_and_grad(&point)?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("SHAP gradient at sample {s}")));
            }
            Ok(g.iter().zip(x.iter().zip(b)).map(|(g, (x, b))| g * (x - b)).collect())
        })
        .collect::<Result<_>>()?;
    let mut phi = vec![0.0; d];
    for c in &contributions {
        for (p, v) in phi.iter_mut().zip(c) {
            *p += v;
        }
    }
    let n = config.n_samples as f64;
    phi.iter_mut().for_each(|p| *p /= n);
    let mut usage = vec![0; baselines.len()];
    for &b in &schedule {
        usage[b] += 1;
    }
    Ok(Attribution {
        case_id: String::new(),
        target: ShapTarget::default(),
        phi,
        baseline_usage: usage,
        n_samples: config.n_samples,
        noise_sigma: config.noise_sigma,
        seed: config.seed,
    })
}

/// `|Σφ − (f(x) − E_b f(b))|`, the expectation weighted by how often each
/// baseline was drawn.
pub fn completeness_gap(
    attr: &Attribution,
    model: &dyn ScalarModel,
    x: &[f64],
    baselines: &[Vec<f64>],
) -> Result<f64> {
    if attr.baseline_usage.len() != baselines.len() {
        return Err(Error::dims("baseline set", attr.baseline_usage.len(), baselines.len()));
    }
    let total: usize = attr.baseline_usage.iter().sum();
    let mut expected = 0.0;
    for (b, &u) in baselines.iter().zip(&attr.baseline_usage) {
        if u > 0 {
            expected += model.value(b)? * u as f64 / total as f64;
        }
    }
    let sum: f64 = attr.phi.iter().sum();
    Ok((sum - (model.value(x)? - expected)).abs())
}

/// Indices of the `k` largest `|φ|`, descending, ties by lower index.
pub fn top_k_features(phi: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > phi.len() {
        return Err(Error::InvalidArgument(format!(
            "top-{k} requested from {} features",
            phi.len()
        )));
    }
    let mut idx: Vec<usize> = (0..phi.len()).collect();
    idx.sort_by(|&a, &b| phi[b].abs().total_cmp(&phi[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// Default reference set: `count` all-0.5 vectors plus the feature mean.
pub fn default_baselines(scaled: &[Vec<f64>], count: usize) -> Result<Vec<Vec<f64>>> {
    let first = scaled.first().ok_or(Error::EmptyInput("baseline data"))?;
    let d = first.len();
    let mut mean = vec![0.0; d];
    for r in scaled {
        if r.len() != d {
            return Err(Error::dims("feature vector", d, r.len()));
        }
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= scaled.len() as f64);
    let mut out = vec![vec![0.5; d]; count];
    out.push(mean);
    Ok(out)
}
