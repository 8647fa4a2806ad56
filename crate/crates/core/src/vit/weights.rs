use std::path::Path;

use super::config::VitConfig;
use crate::container::{Tensor, TensorFile};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Rng};

pub const VIT_KIND: [u8; 4] = *b"VITW";

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerNormParams {
    pub fn identity(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
        }
    }
}

/// `y = x·W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inp: usize, out: usize) -> Self {
        Self {
            weight: Matrix::zeros(inp, out),
            bias: vec![0.0; out],
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = x.matmul(&self.weight)?;
        y.add_row_vector(&self.bias)?;
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub ln1: LayerNormParams,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub ln2: LayerNormParams,
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VitWeights {
    pub config: VitConfig,
    /// `P²C × D`
    pub patch_projection: Matrix,
    /// `(N + 1) × D`
    pub positional_embedding: Matrix,
    pub class_token: Vec<f64>,
    pub blocks: Vec<BlockWeights>,
    pub final_norm: LayerNormParams,
}

fn uniform_matrix(rows: usize, cols: usize, limit: f64, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(-limit, limit))
}

fn random_linear(inp: usize, out: usize, rng: &mut Rng) -> Linear {
    let limit = (3.0 / inp as f64).sqrt();
    Linear {
        weight: uniform_matrix(inp, out, limit, rng),
        bias: (0..out).map(|_| rng.uniform_range(-0.1, 0.1)).collect(),
    }
}

fn random_norm(dim: usize, rng: &mut Rng) -> LayerNormParams {
    LayerNormParams {
        gamma: (0..dim).map(|_| rng.uniform_range(0.8, 1.2)).collect(),
        beta: (0..dim).map(|_| rng.uniform_range(-0.1, 0.1)).collect(),
    }
}

impl VitWeights {
    /// All-zero projections and embeddings, identity norms.
    pub fn zeros(config: VitConfig) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let block = BlockWeights {
            ln1: LayerNormParams::identity(d),
            query: Linear::zeros(d, d),
            key: Linear::zeros(d, d),
            value: Linear::zeros(d, d),
            output: Linear::zeros(d, d),
            ln2: LayerNormParams::identity(d),
            fc1: Linear::zeros(d, config.mlp_hidden),
            fc2: Linear::zeros(config.mlp_hidden, d),
        };
        Ok(Self {
            config,
            patch_projection: Matrix::zeros(config.patch_dim(), d),
            positional_embedding: Matrix::zeros(config.num_tokens(), d),
            class_token: vec![0.0; d],
            blocks: vec![block; config.num_layers],
            final_norm: LayerNormParams::identity(d),
        })
    }

    /// Seeded random weights with unit-variance projections.
    pub fn random(config: VitConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let patch_projection =
            uniform_matrix(config.patch_dim(), d, (3.0 / config.patch_dim() as f64).sqrt(), rng);
        let positional_embedding =
            Matrix::from_fn(config.num_tokens(), d, |_, _| 0.5 * rng.normal());
        let class_token = (0..d).map(|_| 0.5 * rng.normal()).collect();
        let blocks = (0..config.num_layers)
            .map(|_| BlockWeights {
                ln1: random_norm(d, rng),
                query: random_linear(d, d, rng),
                key: random_linear(d, d, rng),
                value: random_linear(d, d, rng),
                output: random_linear(d, d, rng),
                ln2: random_norm(d, rng),
                fc1: random_linear(d, config.mlp_hidden, rng),
                fc2: random_linear(config.mlp_hidden, d, rng),
            })
            .collect();
        Ok(Self {
            config,
            patch_projection,
            positional_embedding,
            class_token,
            blocks,
            final_norm: random_norm(d, rng),
        })
    }

    pub fn to_tensor_file(&self) -> TensorFile {
        let c = &self.config;
        let mut f = TensorFile::new(VIT_KIND);
        f.set_int("image_size", c.image_size as i64);
        f.set_int("channels", c.channels as i64);
        f.set_int("patch_size", c.patch_size as i64);
        f.set_int("embed_dim", c.embed_dim as i64);
        f.set_int("num_heads", c.num_heads as i64);
        f.set_int("num_layers", c.num_layers as i64);
        f.set_int("mlp_hidden", c.mlp_hidden as i64);
        f.set_real("layer_norm_eps", c.layer_norm_eps);
        let mat = |name: &str, m: &Matrix| {
            Tensor::new(name, vec![m.rows(), m.cols()], m.data().to_vec())
        };
        let vec1 = |name: &str, v: &[f64]| Tensor::new(name, vec![v.len()], v.to_vec());
        f.push(mat("patch_projection", &self.patch_projection));
        f.push(mat("positional_embedding", &self.positional_embedding));
        f.push(vec1("class_token", &self.class_token));
        let push_norm = |f: &mut TensorFile, p: &str, n: &LayerNormParams| {
            f.push(vec1(&format!("{p}.gamma"), &n.gamma));
            f.push(vec1(&format!("{p}.beta"), &n.beta));
        };
        let push_linear = |f: &mut TensorFile, p: &str, l: &Linear| {
            f.push(mat(&format!("{p}.weight"), &l.weight));
            f.push(vec1(&format!("{p}.bias"), &l.bias));
        };
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("blocks.{i}");
            push_norm(&mut f, &format!("{p}.ln1"), &b.ln1);
            push_linear(&mut f, &format!("{p}.query"), &b.query);
            push_linear(&mut f, &format!("{p}.key"), &b.key);
            push_linear(&mut f, &format!("{p}.value"), &b.value);
            push_linear(&mut f, &format!("{p}.output"), &b.output);
            push_norm(&mut f, &format!("{p}.ln2"), &b.ln2);
            push_linear(&mut f, &format!("{p}.fc1"), &b.fc1);
            push_linear(&mut f, &format!("{p}.fc2"), &b.fc2);
        }
        push_norm(&mut f, "final_norm", &self.final_norm);
        f
    }

    pub fn from_tensor_file(f: &TensorFile) -> Result<Self> {
        if f.kind != VIT_KIND {
            return Err(Error::Format(format!(
                "expected a ViT weights container, found kind {:?}",
                String::from_utf8_lossy(&f.kind)
            )));
        }
        let config = VitConfig {
            image_size: f.usize("image_size")?,
            channels: f.usize("channels")?,
            patch_size: f.usize("patch_size")?,
            embed_dim: f.usize("embed_dim")?,
            num_heads: f.usize("num_heads")?,
            num_layers: f.usize("num_layers")?,
            mlp_hidden: f.usize("mlp_hidden")?,
            layer_norm_eps: f.real("layer_norm_eps")?,
        };
        config
            .validate()
            .map_err(|e| Error::Format(format!("weights header: {e}")))?;
        let d = config.embed_dim;
        let mat = |name: &str, r: usize, c: usize| -> Result<Matrix> {
            let t = f.expect(name, &[r, c])?;
            Matrix::from_vec(r, c, t.data.clone())
        };
        let vec1 = |name: &str, n: usize| -> Result<Vec<f64>> { Ok(f.expect(name, &[n])?.data.clone()) };
        let norm = |p: &str| -> Result<LayerNormParams> {
            Ok(LayerNormParams {
                gamma: vec1(&format!("{p}.gamma"), d)?,
                beta: vec1(&format!("{p}.beta"), d)?,
            })
        };
        let linear = |p: &str, i: usize, o: usize| -> Result<Linear> {
            Ok(Linear {
                weight: mat(&format!("{p}.weight"), i, o)?,
                bias: vec1(&format!("{p}.bias"), o)?,
            })
        };
        let patch_projection = mat("patch_projection", config.patch_dim(), d)?;
        let positional_embedding = mat("positional_embedding", config.num_tokens(), d)?;
        let class_token = vec1("class_token", d)?;
        let mut blocks = Vec::with_capacity(config.num_layers);
        for i in 0..config.num_layers {
            let p = format!("blocks.{i}");
            blocks.push(BlockWeights {
                ln1: norm(&format!("{p}.ln1"))?,
                query: linear(&format!("{p}.query"), d, d)?,
                key: linear(&format!("{p}.key"), d, d)?,
                value: linear(&format!("{p}.value"), d, d)?,
                output: linear(&format!("{p}.output"), d, d)?,
                ln2: norm(&format!("{p}.ln2"))?,
                fc1: linear(&format!("{p}.fc1"), d, config.mlp_hidden)?,
                fc2: linear(&format!("{p}.fc2"), config.mlp_hidden, d)?,
            });
        }
        let final_norm = norm("final_norm")?;
        let w = Self {
            config,
            patch_projection,
            positional_embedding,
            class_token,
            blocks,
            final_norm,
        };
        if !w.is_finite() {
            return Err(Error::NonFinite("ViT weights contain NaN or infinity".into()));
        }
        Ok(w)
    }

    fn is_finite(&self) -> bool {
        let norm_ok = |n: &LayerNormParams| n.gamma.iter().chain(&n.beta).all(|v| v.is_finite());
        let lin_ok = |l: &Linear| l.weight.is_finite() && l.bias.iter().all(|v| v.is_finite());
        self.patch_projection.is_finite()
            && self.positional_embedding.is_finite()
            && self.class_token.iter().all(|v| v.is_finite())
            && norm_ok(&self.final_norm)
            && self.blocks.iter().all(|b| {
                norm_ok(&b.ln1)
                    && norm_ok(&b.ln2)
                    && [&b.query, &b.key, &b.value, &b.output, &b.fc1, &b.fc2]
                        .iter()
                        .all(|l| lin_ok(l))
            })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_tensor_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensor_file(&TensorFile::load(path)?)
    }
}
