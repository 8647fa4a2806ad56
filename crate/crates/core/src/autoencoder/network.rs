use crate::error::{Error, Result};
use crate::numeric::{relu_grad_scalar, relu_scalar, sigmoid_scalar, sign, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => relu_scalar(x),
            Activation::Sigmoid => sigmoid_scalar(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation and output.
    #[inline]
    pub fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => relu_grad_scalar(pre),
            Activation::Sigmoid => out * (1.0 - out),
            Activation::Identity => 1.0,
        }
    }
}

/// `y = act(x·W + b)`, `W` is `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(inp: usize, out: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros(inp, out),
            bias: vec![0.0; out],
            activation,
        }
    }

    /// He-uniform for ReLU layers, Xavier-uniform otherwise; zero bias.
    pub fn initialized(inp: usize, out: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = match activation {
            Activation::Relu => (6.0 / inp as f64).sqrt(),
            Activation::Sigmoid | Activation::Identity => (6.0 / (inp + out) as f64).sqrt(),
        };
        Self {
            weight: Matrix::from_fn(inp, out, |_, _| rng.uniform_range(-limit, limit)),
            bias: vec![0.0; out],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn num_params(&self) -> usize {
        self.bias.len() * (self.weight.rows() + 1)
    }

    fn pre_activation(&self, x: &Matrix) -> Result<Matrix> {
        let mut pre = x.matmul(&self.weight)?;
        pre.add_row_vector(&self.bias)?;
        Ok(pre)
    }
}

/// Dense encoder and mirrored decoder. Hidden layers use ReLU; the latent
/// layer and the reconstruction layer use the logistic sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub encoder: Vec<DenseLayer>,
    pub decoder: Vec<DenseLayer>,
}

pub const DEFAULT_LAYER_SIZES: [usize; 4] = [1024, 512, 256, 128];

fn activation_for(layer: usize, count: usize) -> Activation {
    if layer + 1 == count {
        Activation::Sigmoid
    } else {
        Activation::Relu
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "autoencoder needs at least an input and a latent size, all positive; got {sizes:?}"
        )));
    }
    Ok(())
}

impl AutoencoderParams {
    fn build(sizes: &[usize], mut make: impl FnMut(usize, usize, Activation) -> DenseLayer) -> Result<Self> {
        check_sizes(sizes)?;
        let n = sizes.len() - 1;
        let encoder = (0..n)
            .map(|i| make(sizes[i], sizes[i + 1], activation_for(i, n)))
            .collect();
        let rev: Vec<usize> = sizes.iter().rev().copied().collect();
        let decoder = (0..n)
            .map(|i| make(rev[i], rev[i + 1], activation_for(i, n)))
            .collect();
        Ok(Self { encoder, decoder })
    }

    /// `sizes` lists the encoder widths from input to latent.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::build(sizes, DenseLayer::zeros)
    }

    pub fn initialized(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        Self::build(sizes, |i, o, a| DenseLayer::initialized(i, o, a, rng))
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.last().unwrap().output_dim()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.encoder.iter().map(DenseLayer::output_dim));
        s
    }

    pub fn num_params(&self) -> usize {
        self.layers().map(DenseLayer::num_params).sum()
    }

    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder.iter().chain(&self.decoder)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut())
    }

    /// Same shapes, all zero.
    pub fn zeros_like(&self) -> Self {
        let z = |l: &DenseLayer| DenseLayer::zeros(l.input_dim(), l.output_dim(), l.activation);
        Self {
            encoder: self.encoder.iter().map(z).collect(),
            decoder: self.decoder.iter().map(z).collect(),
        }
    }

    /// Parameters in layer order, each layer weights then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in self.layers() {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dims("flattened parameters", self.num_params(), flat.len()));
        }
        let mut pos = 0;
        for l in self.layers_mut() {
            let n = l.weight.data().len();
            l.weight.data_mut().copy_from_slice(&flat[pos..pos + n]);
            pos += n;
            let b = l.bias.len();
            l.bias.copy_from_slice(&flat[pos..pos + b]);
            pos += b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|v| v.is_finite()))
    }
}

/// Cached pre-activations and outputs of a stack of layers.
#[derive(Debug, Clone)]
pub struct StackTrace {
    pub input: Matrix,
    pub pre: Vec<Matrix>,
    pub out: Vec<Matrix>,
}

impl StackTrace {
    pub fn output(&self) -> &Matrix {
        self.out.last().unwrap_or(&self.input)
    }
}

pub fn forward_stack(layers: &[DenseLayer], x: &Matrix) -> Result<StackTrace> {
    let mut pre = Vec::with_capacity(layers.len());
    let mut out: Vec<Matrix> = Vec::with_capacity(layers.len());
    for l in layers {
        let input = out.last().unwrap_or(x);
        let p = l.pre_activation(input)?;
        let mut o = p.clone();
        o.map_inplace(|v| l.activation.apply(v));
        pre.push(p);
        out.push(o);
    }
    Ok(StackTrace {
        input: x.clone(),
        pre,
        out,
    })
}

/// Backpropagates `d_out` (gradient w.r.t. the stack output) and returns
/// the gradient w.r.t. the stack input. Parameter gradients are added into
/// `grads` when given.
pub fn backward_stack(
    layers: &[DenseLayer],
    trace: &StackTrace,
    d_out: Matrix,
    mut grads: Option<&mut [DenseLayer]>,
) -> Result<Matrix> {
    let mut delta = d_out;
    for i in (0..layers.len()).rev() {
        let l = &layers[i];
        for ((d, &p), &o) in delta
            .data_mut()
            .iter_mut()
            .zip(trace.pre[i].data())
            .zip(trace.out[i].data())
        {
            *d *= l.activation.derivative(p, o);
        }
        let input = if i == 0 { &trace.input } else { &trace.out[i - 1] };
        if let Some(g) = grads.as_deref_mut() {
            let dw = input.matmul_tn(&delta)?;
            for (a, b) in g[i].weight.data_mut().iter_mut().zip(dw.data()) {
                *a += b;
            }
            for (a, b) in g[i].bias.iter_mut().zip(delta.sum_rows()) {
                *a += b;
            }
        }
        delta = delta.matmul_nt(&l.weight)?;
    }
    Ok(delta)
}

fn single_row(x: &[f64], dim: usize, what: &str) -> Result<Matrix> {
    if x.len() != dim {
        return Err(Error::dims(what, dim, x.len()));
    }
    Matrix::from_vec(1, dim, x.to_vec())
}

pub fn encode(x: &[f64], params: &AutoencoderParams) -> Result<Vec<f64>> {
    let m = single_row(x, params.input_dim(), "encoder input")?;
    Ok(forward_stack(&params.encoder, &m)?.output().row(0).to_vec())
}

pub fn decode(z: &[f64], params: &AutoencoderParams) -> Result<Vec<f64>> {
    let m = single_row(z, params.latent_dim(), "decoder input")?;
    Ok(forward_stack(&params.decoder, &m)?.output().row(0).to_vec())
}

pub fn encode_batch(x: &Matrix, params: &AutoencoderParams) -> Result<Matrix> {
    if x.cols() != params.input_dim() {
        return Err(Error::dims("encoder input", params.input_dim(), x.cols()));
    }
    Ok(forward_stack(&params.encoder, x)?.output().clone())
}

/// Mean over rows of the per-row MAE reconstruction loss.
pub fn batch_loss(x: &Matrix, params: &AutoencoderParams) -> Result<f64> {
    let z = encode_batch(x, params)?;
    let xh = forward_stack(&params.decoder, &z)?.output().clone();
    let n = x.data().len() as f64;
    Ok(x.data().iter().zip(xh.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
}

pub fn reconstruction_loss(x: &[f64], params: &AutoencoderParams) -> Result<f64> {
    let m = single_row(x, params.input_dim(), "encoder input")?;
    batch_loss(&m, params)
}

/// Loss and exact (sub)gradients of the batch-mean MAE reconstruction loss.
pub fn backprop_batch(x: &Matrix, params: &AutoencoderParams) -> Result<(f64, AutoencoderParams)> {
    if x.cols() != params.input_dim() {
        return Err(Error::dims("encoder input", params.input_dim(), x.cols()));
    }
    let enc = forward_stack(&params.encoder, x)?;
    let dec = forward_stack(&params.decoder, enc.output())?;
    let xh = dec.output();
    if !xh.is_finite() {
        return Err(Error::NonFinite("autoencoder reconstruction".into()));
    }
    let n = x.data().len() as f64;
    let loss = x.data().iter().zip(xh.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let mut d = Matrix::zeros(x.rows(), x.cols());
    for ((g, &a), &b) in d.data_mut().iter_mut().zip(x.data()).zip(xh.data()) {
        *g = sign(b - a) / n;
    }
    let mut grads = params.zeros_like();
    let dz = backward_stack(&params.decoder, &dec, d, Some(&mut grads.decoder))?;
    backward_stack(&params.encoder, &enc, dz, Some(&mut grads.encoder))?;
    if !grads.is_finite() {
        return Err(Error::NonFinite("autoencoder gradient".into()));
    }
    Ok((loss, grads))
}

pub fn backprop(x: &[f64], params: &AutoencoderParams) -> Result<(f64, AutoencoderParams)> {
    let m = single_row(x, params.input_dim(), "encoder input")?;
    backprop_batch(&m, params)
}

/// Latent vector and the gradient of `Σ_j weights[j]·z_j` w.r.t. the input.
pub fn encoder_input_gradient(
    x: &[f64],
    params: &AutoencoderParams,
    weights: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if weights.len() != params.latent_dim() {
        return Err(Error::dims("latent readout", params.latent_dim(), weights.len()));
    }
    let m = single_row(x, params.input_dim(), "encoder input")?;
    let enc = forward_stack(&params.encoder, &m)?;
    let z = enc.output().row(0).to_vec();
    let d = Matrix::from_vec(1, weights.len(), weights.to_vec())?;
    let g = backward_stack(&params.encoder, &enc, d, None)?;
    Ok((z, g.into_data()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_half() {
        let p = AutoencoderParams::zeros(&[6, 4, 3]).unwrap();
        assert_eq!(encode(&[0.2; 6], &p).unwrap(), vec![0.5; 3]);
        assert_eq!(decode(&[0.9; 3], &p).unwrap(), vec![0.5; 6]);
    }

    #[test]
    fn default_shapes() {
        let p = AutoencoderParams::initialized(&DEFAULT_LAYER_SIZES, &mut Rng::new(0)).unwrap();
        assert_eq!(p.layer_sizes(), vec![1024, 512, 256, 128]);
        let x = vec![0.5; 1024];
        let z = encode(&x, &p).unwrap();
        assert_eq!(z.len(), 128);
        let xh = decode(&z, &p).unwrap();
        assert_eq!(xh.len(), 1024);
        assert!(xh.iter().all(|&v| v > 0.0 && v < 1.0));
        assert_eq!(p.decoder[0].activation, Activation::Relu);
        assert_eq!(p.decoder[2].activation, Activation::Sigmoid);
        assert_eq!(p.encoder[2].activation, Activation::Sigmoid);
    }

    #[test]
    fn dimension_errors() {
        let p = AutoencoderParams::zeros(&[4, 2]).unwrap();
        assert!(encode(&[0.0; 3], &p).is_err());
        assert!(decode(&[0.0; 3], &p).is_err());
        assert!(AutoencoderParams::zeros(&[4]).is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let p = AutoencoderParams::initialized(&[5, 3, 2], &mut Rng::new(4)).unwrap();
        let mut q = p.zeros_like();
        q.unflatten(&p.flatten()).unwrap();
        assert_eq!(p, q);
    }
}
