use serde::{Deserialize, Serialize};

use super::data::{check_training, to_matrix};
use crate::autoencoder::{backward_stack, forward_stack, Activation, DenseLayer};
use crate::error::{Error, Result};
use crate::numeric::{softmax_inplace, squared_euclidean, AdamHyper, AdamState, Matrix, Rng};

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Row-wise softmax cross-entropy: returns `(mean loss, (P − Y)/n)`.
fn softmax_xent(scores: &Matrix, y: &[usize]) -> (f64, Matrix) {
    let n = scores.rows() as f64;
    let mut delta = scores.clone();
    let mut loss = 0.0;
    for (i, &label) in y.iter().enumerate() {
        let row = delta.row_mut(i);
        softmax_inplace(row);
        loss -= row[label].max(f64::MIN_POSITIVE).ln();
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    (loss / n, delta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 0.5,
            l2: 1e-4,
        }
    }
}

/// Multinomial logistic regression, `scores = x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LogisticRegression {
    pub fn zeros(dim: usize, num_classes: usize) -> Self {
        Self {
            weight: Matrix::zeros(dim, num_classes),
            bias: vec![0.0; num_classes],
        }
    }

    pub fn scores(&self, x: &Matrix) -> Result<Matrix> {
        let mut s = x.matmul(&self.weight)?;
        s.add_row_vector(&self.bias)?;
        Ok(s)
    }

    /// Mean cross-entropy plus `l2/2 · ‖W‖²` and its gradient.
    pub fn loss_and_grad(&self, x: &Matrix, y: &[usize], l2: f64) -> Result<(f64, Self)> {
        let (loss, delta) = softmax_xent(&self.scores(x)?, y);
        let mut gw = x.matmul_tn(&delta)?;
        for (g, w) in gw.data_mut().iter_mut().zip(self.weight.data()) {
            *g += l2 * w;
        }
        let penalty = 0.5 * l2 * self.weight.data().iter().map(|w| w * w).sum::<f64>();
        Ok((
            loss + penalty,
            Self {
                weight: gw,
                bias: delta.sum_rows(),
            },
        ))
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.weight.data().to_vec();
        v.extend_from_slice(&self.bias);
        v
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        let nw = self.weight.data().len();
        if flat.len() != nw + self.bias.len() {
            return Err(Error::dims("logistic parameters", nw + self.bias.len(), flat.len()));
        }
        self.weight.data_mut().copy_from_slice(&flat[..nw]);
        self.bias.copy_from_slice(&flat[nw..]);
        Ok(())
    }

    /// Full-batch gradient descent from zero weights.
    pub fn fit(x: &[Vec<f64>], y: &[usize], num_classes: usize, cfg: &LogRegConfig) -> Result<Self> {
        check_training(x, y, num_classes)?;
        let xm = to_matrix(x)?;
        let mut model = Self::zeros(xm.cols(), num_classes);
        for _ in 0..cfg.epochs {
            let (_, g) = model.loss_and_grad(&xm, y, cfg.l2)?;
            for (w, d) in model.weight.data_mut().iter_mut().zip(g.weight.data()) {
                *w -= cfg.learning_rate * d;
            }
            for (b, d) in model.bias.iter_mut().zip(&g.bias) {
                *b -= cfg.learning_rate * d;
            }
        }
        if !model.weight.is_finite() {
            return Err(Error::NonFinite("logistic regression weights".into()));
        }
        Ok(model)
    }

    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Matrix> {
        let mut s = self.scores(&to_matrix(x)?)?;
        for i in 0..s.rows() {
            softmax_inplace(s.row_mut(i));
        }
        Ok(s)
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        let s = self.scores(&to_matrix(x)?)?;
        Ok((0..s.rows()).map(|i| argmax(s.row(i))).collect())
    }
}

/// Majority vote among the `k` nearest training points. Distance ties go
/// to the lower training index and vote ties to the smaller class.
pub fn predict_knn(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    query: &[f64],
    k: usize,
) -> Result<usize> {
    if train_x.is_empty() {
        return Err(Error::EmptyInput("KNN training set"));
    }
    if train_x.len() != train_y.len() {
        return Err(Error::dims("training labels", train_x.len(), train_y.len()));
    }
    if k == 0 || k > train_x.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={}",
            train_x.len()
        )));
    }
    if query.len() != train_x[0].len() {
        return Err(Error::dims("KNN query", train_x[0].len(), query.len()));
    }
    let mut d: Vec<(f64, usize)> = train_x
        .iter()
        .enumerate()
        .map(|(i, x)| (squared_euclidean(x, query), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let num_classes = train_y.iter().max().map_or(0, |m| m + 1);
    let mut votes = vec![0usize; num_classes];
    for &(_, i) in &d[..k] {
        votes[train_y[i]] += 1;
    }
    let mut best = 0;
    for (c, &v) in votes.iter().enumerate() {
        if v > votes[best] {
            best = c;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 500,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

/// One ReLU hidden layer and a linear softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: [DenseLayer; 2],
}

impl Mlp {
    pub fn initialized(dim: usize, hidden: usize, num_classes: usize, rng: &mut Rng) -> Self {
        Self {
            layers: [
                DenseLayer::initialized(dim, hidden, Activation::Relu, rng),
                DenseLayer::initialized(hidden, num_classes, Activation::Identity, rng),
            ],
        }
    }

    pub fn loss_and_grad(&self, x: &Matrix, y: &[usize]) -> Result<(f64, [DenseLayer; 2])> {
        let trace = forward_stack(&self.layers, x)?;
        let (loss, delta) = softmax_xent(trace.output(), y);
        let mut grads = self.layers.clone().map(|l| DenseLayer::zeros(l.input_dim(), l.output_dim(), l.activation));
        backward_stack(&self.layers, &trace, delta, Some(&mut grads))?;
        Ok((loss, grads))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.data().iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.layers.iter().map(DenseLayer::num_params).sum();
        if flat.len() != total {
            return Err(Error::dims("MLP parameters", total, flat.len()));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// Full-batch Adam on cross-entropy.
    pub fn fit(x: &[Vec<f64>], y: &[usize], num_classes: usize, cfg: &MlpConfig) -> Result<Self> {
        check_training(x, y, num_classes)?;
        if cfg.hidden == 0 {
            return Err(Error::InvalidArgument("MLP hidden width must be positive".into()));
        }
        let xm = to_matrix(x)?;
        let mut model = Self::initialized(xm.cols(), cfg.hidden, num_classes, &mut Rng::new(cfg.seed));
        let hyper = AdamHyper::with_learning_rate(cfg.learning_rate);
        hyper.validate()?;
        let mut states: Vec<(AdamState, AdamState)> = model
            .layers
            .iter()
            .map(|l| (AdamState::new(l.weight.data().len(), hyper), AdamState::new(l.bias.len(), hyper)))
            .collect();
        for _ in 0..cfg.epochs {
            let (_, grads) = model.loss_and_grad(&xm, y)?;
            for ((l, g), (sw, sb)) in model.layers.iter_mut().zip(&grads).zip(&mut states) {
                sw.step(l.weight.data_mut(), g.weight.data())?;
                sb.step(&mut l.bias, &g.bias)?;
            }
        }
        if model.layers.iter().any(|l| !l.weight.is_finite()) {
            return Err(Error::NonFinite("MLP weights".into()));
        }
        Ok(model)
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<usize>> {
        let trace = forward_stack(&self.layers, &to_matrix(x)?)?;
        let s = trace.output();
        Ok((0..s.rows()).map(|i| argmax(s.row(i))).collect())
    }
}
