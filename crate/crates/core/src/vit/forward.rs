use super::config::VitConfig;
use super::weights::{BlockWeights, LayerNormParams, VitWeights};
use crate::error::{Error, Result};
use crate::numeric::{gelu_grad_scalar, gelu_scalar, softmax_inplace, Matrix};
use crate::slide::Tile;

/// Tile pixels scaled to `[0, 1]`, `(y, x, c)` row-major.
pub fn scale_pixels(tile: &Tile) -> Vec<f64> {
    tile.pixels().iter().map(|&v| v as f64 / 255.0).collect()
}

/// Splits an image into `N` flattened patches (rows of the result), patches
/// in row-major grid order and pixels row-major inside each patch.
pub fn patchify_scaled(pixels: &[f64], config: &VitConfig) -> Result<Matrix> {
    let (h, p, c) = (config.image_size, config.patch_size, config.channels);
    if pixels.len() != h * h * c {
        return Err(Error::dims("image buffer", h * h * c, pixels.len()));
    }
    let g = config.grid_side();
    let mut out = Matrix::zeros(config.num_patches(), config.patch_dim());
    for pr in 0..g {
        for pc in 0..g {
            let row = out.row_mut(pr * g + pc);
            for py in 0..p {
                let src = ((pr * p + py) * h + pc * p) * c;
                row[py * p * c..(py + 1) * p * c].copy_from_slice(&pixels[src..src + p * c]);
            }
        }
    }
    Ok(out)
}

pub fn patchify(tile: &Tile, config: &VitConfig) -> Result<Matrix> {
    if tile.width() != config.image_size || tile.height() != config.image_size {
        return Err(Error::InvalidArgument(format!(
            "tile is {}x{} but the encoder expects {}x{}",
            tile.width(),
            tile.height(),
            config.image_size,
            config.image_size
        )));
    }
    if config.channels != 3 {
        return Err(Error::dims("image channels", config.channels, 3));
    }
    patchify_scaled(&scale_pixels(tile), config)
}

/// Inverse of [`patchify_scaled`] on gradient buffers.
fn unpatchify(patches: &Matrix, config: &VitConfig) -> Vec<f64> {
    let (h, p, c) = (config.image_size, config.patch_size, config.channels);
    let g = config.grid_side();
    let mut out = vec![0.0; h * h * c];
    for pr in 0..g {
        for pc in 0..g {
            let row = patches.row(pr * g + pc);
            for py in 0..p {
                let dst = ((pr * p + py) * h + pc * p) * c;
                out[dst..dst + p * c].copy_from_slice(&row[py * p * c..(py + 1) * p * c]);
            }
        }
    }
    out
}

/// Token 0 is `class_token + E_p[0]`; token `i ≥ 1` is `x_p^i·W_p + E_p[i]`.
pub fn embed(patches: &Matrix, weights: &VitWeights) -> Result<Matrix> {
    let cfg = &weights.config;
    if patches.rows() + 1 != weights.positional_embedding.rows() {
        return Err(Error::dims(
            "patch count vs positional embedding",
            weights.positional_embedding.rows() - 1,
            patches.rows(),
        ));
    }
    if patches.cols() != cfg.patch_dim() {
        return Err(Error::dims("patch length", cfg.patch_dim(), patches.cols()));
    }
    let projected = patches.matmul(&weights.patch_projection)?;
    let d = cfg.embed_dim;
    let mut tokens = Matrix::zeros(patches.rows() + 1, d);
    for j in 0..d {
        tokens.set(0, j, weights.class_token[j] + weights.positional_embedding.get(0, j));
    }
    for i in 0..patches.rows() {
        let pos = weights.positional_embedding.row(i + 1);
        for (j, (t, &v)) in tokens.row_mut(i + 1).iter_mut().zip(projected.row(i)).enumerate() {
            *t = v + pos[j];
        }
    }
    Ok(tokens)
}

#[derive(Debug, Clone)]
pub(crate) struct NormCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
}

pub(crate) fn layer_norm(x: &Matrix, p: &LayerNormParams, eps: f64) -> (Matrix, NormCache) {
    let d = x.cols();
    let mut xhat = Matrix::zeros(x.rows(), d);
    let mut y = Matrix::zeros(x.rows(), d);
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(is);
        for j in 0..d {
            let h = (row[j] - mean) * is;
            xhat.set(r, j, h);
            y.set(r, j, h * p.gamma[j] + p.beta[j]);
        }
    }
    (y, NormCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward(dy: &Matrix, cache: &NormCache, p: &LayerNormParams) -> Matrix {
    let d = dy.cols();
    let mut dx = Matrix::zeros(dy.rows(), d);
    for r in 0..dy.rows() {
        let xh = cache.xhat.row(r);
        let dxhat: Vec<f64> = dy.row(r).iter().zip(&p.gamma).map(|(g, w)| g * w).collect();
        let sum: f64 = dxhat.iter().sum();
        let sum_x: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
        let k = cache.inv_std[r] / d as f64;
        for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
            *o = k * (d as f64 * dxhat[j] - sum - xh[j] * sum_x);
        }
    }
    dx
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// `x + MHSA(LN(x))`
    pub tokens: Matrix,
    /// One `T × T` row-stochastic matrix per head.
    pub probs: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionCache {
    ln: NormCache,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Vec<Matrix>,
}

fn attention_with_cache(
    x: &Matrix,
    block: &BlockWeights,
    config: &VitConfig,
    layer: usize,
) -> Result<(AttentionOutput, AttentionCache)> {
    let (a, ln) = layer_norm(x, &block.ln1, config.layer_norm_eps);
    let q = block.query.forward(&a)?;
    let k = block.key.forward(&a)?;
    let v = block.value.forward(&a)?;
    let t = x.rows();
    let dk = config.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    let mut ctx = Matrix::zeros(t, config.embed_dim);
    let mut probs = Vec::with_capacity(config.num_heads);
    for h in 0..config.num_heads {
        let off = h * dk;
        let mut p = Matrix::zeros(t, t);
        for i in 0..t {
            let qi = &q.row(i)[off..off + dk];
            let row = p.row_mut(i);
            for (j, s) in row.iter_mut().enumerate() {
                let kj = &k.row(j)[off..off + dk];
                *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            if row.iter().any(|s| !s.is_finite()) {
                return Err(Error::AttentionOverflow { layer });
            }
            softmax_inplace(row);
        }
        for i in 0..t {
            for j in 0..t {
                let w = p.get(i, j);
                let vj = &v.row(j)[off..off + dk];
                let ci = &mut ctx.row_mut(i)[off..off + dk];
                for (c, &vv) in ci.iter_mut().zip(vj) {
                    *c += w * vv;
                }
            }
        }
        probs.push(p);
    }
    let mut out = block.output.forward(&ctx)?;
    for (o, &xi) in out.data_mut().iter_mut().zip(x.data()) {
        *o += xi;
    }
    Ok((
        AttentionOutput {
            tokens: out,
            probs: probs.clone(),
        },
        AttentionCache { ln, q, k, v, probs },
    ))
}

/// Pre-norm multi-head self-attention sublayer with its residual.
pub fn attention(
    tokens: &Matrix,
    block: &BlockWeights,
    config: &VitConfig,
    layer: usize,
) -> Result<AttentionOutput> {
    Ok(attention_with_cache(tokens, block, config, layer)?.0)
}

#[derive(Debug, Clone)]
pub(crate) struct MlpCache {
    ln: NormCache,
    pre: Matrix,
}

fn mlp_with_cache(x: &Matrix, block: &BlockWeights, config: &VitConfig) -> Result<(Matrix, MlpCache)> {
    let (b, ln) = layer_norm(x, &block.ln2, config.layer_norm_eps);
    let pre = block.fc1.forward(&b)?;
    let mut act = pre.clone();
    act.map_inplace(gelu_scalar);
    let mut out = block.fc2.forward(&act)?;
    for (o, &xi) in out.data_mut().iter_mut().zip(x.data()) {
        *o += xi;
    }
    Ok((out, MlpCache { ln, pre }))
}

/// Pre-norm GELU MLP sublayer with its residual.
pub fn mlp(tokens: &Matrix, block: &BlockWeights, config: &VitConfig) -> Result<Matrix> {
    Ok(mlp_with_cache(tokens, block, config)?.0)
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub patches: Matrix,
    pub embedded: Matrix,
    /// Token states after each attention sublayer.
    pub after_attention: Vec<Matrix>,
    /// Token states after each full block.
    pub after_block: Vec<Matrix>,
    /// `[layer][head]` attention probabilities.
    pub attention: Vec<Vec<Matrix>>,
    /// Final-normed tokens.
    pub normed: Matrix,
    attn_caches: Vec<AttentionCache>,
    mlp_caches: Vec<MlpCache>,
    final_cache: NormCache,
}

impl ForwardTrace {
    /// Class-token representation.
    pub fn feature(&self) -> Vec<f64> {
        self.normed.row(0).to_vec()
    }

    /// Gradient of `Σ_d seed[d]·feature[d]` with respect to the scaled input
    /// pixels, `(y, x, c)` layout.
    pub fn input_gradient(&self, weights: &VitWeights, seed: &[f64]) -> Result<Vec<f64>> {
        let cfg = &weights.config;
        let d = cfg.embed_dim;
        if seed.len() != d {
            return Err(Error::dims("output gradient seed", d, seed.len()));
        }
        let t = cfg.num_tokens();
        let mut dy = Matrix::zeros(t, d);
        dy.row_mut(0).copy_from_slice(seed);
        let mut dx = layer_norm_backward(&dy, &self.final_cache, &weights.final_norm);
        for layer in (0..cfg.num_layers).rev() {
            let block = &weights.blocks[layer];
            dx = mlp_backward(&dx, block, &self.mlp_caches[layer])?;
            dx = attention_backward(&dx, block, cfg, &self.attn_caches[layer])?;
        }
        let patch_grad = Matrix::from_fn(cfg.num_patches(), d, |i, j| dx.get(i + 1, j))
            .matmul_nt(&weights.patch_projection)?;
        Ok(unpatchify(&patch_grad, cfg))
    }

    pub fn feature_gradient(&self, weights: &VitWeights, feature: usize) -> Result<Vec<f64>> {
        let d = weights.config.embed_dim;
        if feature >= d {
            return Err(Error::InvalidArgument(format!(
                "feature index {feature} out of range for width {d}"
            )));
        }
        let mut seed = vec![0.0; d];
        seed[feature] = 1.0;
        self.input_gradient(weights, &seed)
    }
}

fn mlp_backward(dout: &Matrix, block: &BlockWeights, cache: &MlpCache) -> Result<Matrix> {
    let dact = dout.matmul_nt(&block.fc2.weight)?;
    let mut dpre = dact;
    for (g, &u) in dpre.data_mut().iter_mut().zip(cache.pre.data()) {
        *g *= gelu_grad_scalar(u);
    }
    let dnormed = dpre.matmul_nt(&block.fc1.weight)?;
    let mut dx = layer_norm_backward(&dnormed, &cache.ln, &block.ln2);
    for (a, &b) in dx.data_mut().iter_mut().zip(dout.data()) {
        *a += b;
    }
    Ok(dx)
}

fn attention_backward(
    dout: &Matrix,
    block: &BlockWeights,
    config: &VitConfig,
    cache: &AttentionCache,
) -> Result<Matrix> {
    let t = dout.rows();
    let dk = config.head_dim();
    let scale = 1.0 / (dk as f64).sqrt();
    let dctx = dout.matmul_nt(&block.output.weight)?;
    let mut dq = Matrix::zeros(t, config.embed_dim);
    let mut dkm = Matrix::zeros(t, config.embed_dim);
    let mut dv = Matrix::zeros(t, config.embed_dim);
    for h in 0..config.num_heads {
        let off = h * dk;
        let p = &cache.probs[h];
        // dP = dC·Vᵀ, dV = Pᵀ·dC
        let mut dp = Matrix::zeros(t, t);
        for i in 0..t {
            let dci = &dctx.row(i)[off..off + dk];
            for j in 0..t {
                let vj = &cache.v.row(j)[off..off + dk];
                dp.set(i, j, dci.iter().zip(vj).map(|(a, b)| a * b).sum());
                let w = p.get(i, j);
                let dvj = &mut dv.row_mut(j)[off..off + dk];
                for (o, &g) in dvj.iter_mut().zip(dci) {
                    *o += w * g;
                }
            }
        }
        for i in 0..t {
            let inner: f64 = (0..t).map(|j| dp.get(i, j) * p.get(i, j)).sum();
            for j in 0..t {
                let ds = p.get(i, j) * (dp.get(i, j) - inner) * scale;
                if ds == 0.0 {
                    continue;
                }
                let kj = cache.k.row(j)[off..off + dk].to_vec();
                let qi = cache.q.row(i)[off..off + dk].to_vec();
                for (o, kv) in dq.row_mut(i)[off..off + dk].iter_mut().zip(&kj) {
                    *o += ds * kv;
                }
                for (o, qv) in dkm.row_mut(j)[off..off + dk].iter_mut().zip(&qi) {
                    *o += ds * qv;
                }
            }
        }
    }
    let mut dnormed = dq.matmul_nt(&block.query.weight)?;
    for (a, b) in [(&dkm, &block.key.weight), (&dv, &block.value.weight)] {
        let part = a.matmul_nt(b)?;
        for (x, y) in dnormed.data_mut().iter_mut().zip(part.data()) {
            *x += y;
        }
    }
    let mut dx = layer_norm_backward(&dnormed, &cache.ln, &block.ln1);
    for (a, &b) in dx.data_mut().iter_mut().zip(dout.data()) {
        *a += b;
    }
    Ok(dx)
}

/// Full forward pass on scaled pixels.
pub fn forward(pixels: &[f64], weights: &VitWeights) -> Result<ForwardTrace> {
    let cfg = &weights.config;
    let patches = patchify_scaled(pixels, cfg)?;
    let embedded = embed(&patches, weights)?;
    let mut x = embedded.clone();
    let mut after_attention = Vec::with_capacity(cfg.num_layers);
    let mut after_block = Vec::with_capacity(cfg.num_layers);
    let mut attention_maps = Vec::with_capacity(cfg.num_layers);
    let mut attn_caches = Vec::with_capacity(cfg.num_layers);
    let mut mlp_caches = Vec::with_capacity(cfg.num_layers);
    for (layer, block) in weights.blocks.iter().enumerate() {
        let (att, ac) = attention_with_cache(&x, block, cfg, layer)?;
        let (out, mc) = mlp_with_cache(&att.tokens, block, cfg)?;
        after_attention.push(att.tokens);
        attention_maps.push(att.probs);
        attn_caches.push(ac);
        mlp_caches.push(mc);
        after_block.push(out.clone());
        x = out;
    }
    let (normed, final_cache) = layer_norm(&x, &weights.final_norm, cfg.layer_norm_eps);
    if !normed.is_finite() {
        return Err(Error::NonFinite("ViT forward output".into()));
    }
    Ok(ForwardTrace {
        patches,
        embedded,
        after_attention,
        after_block,
        attention: attention_maps,
        normed,
        attn_caches,
        mlp_caches,
        final_cache,
    })
}

/// Class-token feature vector of length `D` for one tile.
pub fn encode_image(tile: &Tile, weights: &VitWeights) -> Result<Vec<f64>> {
    // patchify validates geometry before the full pass.
    patchify(tile, &weights.config)?;
    Ok(forward(&scale_pixels(tile), weights)?.feature())
}
