use serde::{Deserialize, Serialize};

use super::network::{backprop_batch, batch_loss, AutoencoderParams, DEFAULT_LAYER_SIZES};
use crate::error::{Error, Result};
use crate::numeric::{AdamHyper, AdamState, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Encoder widths from input to latent; the decoder mirrors them.
    pub layer_sizes: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.001,
            seed: 0,
            shuffle: true,
            layer_sizes: DEFAULT_LAYER_SIZES.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch_size must both be at least 1".into(),
            ));
        }
        AdamHyper::with_learning_rate(self.learning_rate).validate()
    }
}

/// Per-layer Adam states for weights and biases.
struct Optimizer {
    states: Vec<(AdamState, AdamState)>,
}

impl Optimizer {
    fn new(params: &AutoencoderParams, hyper: AdamHyper) -> Self {
        let states = params
            .layers()
            .map(|l| {
                (
                    AdamState::new(l.weight.data().len(), hyper),
                    AdamState::new(l.bias.len(), hyper),
                )
            })
            .collect();
        Self { states }
    }

    fn step(&mut self, params: &mut AutoencoderParams, grads: &AutoencoderParams) -> Result<()> {
        for ((layer, grad), (sw, sb)) in params.layers_mut().zip(grads.layers()).zip(&mut self.states) {
            sw.step(layer.weight.data_mut(), grad.weight.data())?;
            sb.step(&mut layer.bias, &grad.bias)?;
        }
        Ok(())
    }
}

fn rows_matrix(rows: &[&Vec<f64>], dim: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        if r.len() != dim {
            return Err(Error::dims("training vector", dim, r.len()));
        }
        data.extend_from_slice(r);
    }
    Matrix::from_vec(rows.len(), dim, data)
}

/// Mini-batch Adam on the MAE reconstruction loss.
///
/// Returns the mean training loss before training followed by the mean
/// training loss after each epoch (`epochs + 1` entries).
pub fn train(
    dataset: &[Vec<f64>],
    params: &mut AutoencoderParams,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("autoencoder training set"));
    }
    let dim = params.input_dim();
    let all: Vec<&Vec<f64>> = dataset.iter().collect();
    let full = rows_matrix(&all, dim)?;
    let mut trace = Vec::with_capacity(config.epochs + 1);
    trace.push(batch_loss(&full, params)?);
    let mut opt = Optimizer::new(params, AdamHyper::with_learning_rate(config.learning_rate));
    let root = Rng::new(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        if config.shuffle {
            order.sort_unstable();
            root.child(1 + epoch as u64).shuffle(&mut order);
        }
        for chunk in order.chunks(config.batch_size) {
            let rows: Vec<&Vec<f64>> = chunk.iter().map(|&i| &dataset[i]).collect();
            let batch = rows_matrix(&rows, dim)?;
            let (_, grads) = backprop_batch(&batch, params)?;
            opt.step(params, &grads)?;
        }
        let loss = batch_loss(&full, params)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {}", epoch + 1)));
        }
        trace.push(loss);
    }
    Ok(trace)
}
