use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slide::Tile;
use crate::vit::{forward, scale_pixels, VitWeights};

/// Occlusion fill value on the 0–255 scale.
pub const OCCLUSION_GRAY: u8 = 128;

/// Midpoint steps along the gray-to-tile path for the gradient method.
pub const GRADIENT_STEPS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaliencyMethod {
    /// `|f_d(tile) − f_d(tile with patch grayed)|`.
    #[default]
    Occlusion,
    /// `|Σ_patch ḡ_d · (x − gray)|` with `ḡ_d` the input gradient averaged
    /// along the straight path from an all-gray tile to the tile.
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchWeight {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSaliency {
    pub feature: usize,
    /// Row-major over the patch grid.
    pub saliency: Vec<f64>,
    pub top: Vec<PatchWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLocalization {
    pub patch_size: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub features: Vec<FeatureSaliency>,
}

fn top_patches(saliency: &[f64], cols: usize, k: usize) -> Vec<PatchWeight> {
    let mut idx: Vec<usize> = (0..saliency.len()).collect();
    idx.sort_by(|&a, &b| saliency[b].total_cmp(&saliency[a]).then(a.cmp(&b)));
    idx.into_iter()
        .take(k)
        .map(|p| PatchWeight {
            row: p / cols,
            col: p % cols,
            weight: saliency[p],
        })
        .collect()
}

fn patch_pixels(side: usize, patch: usize, p: usize) -> impl Iterator<Item = usize> {
    let (pr, pc) = (p / (side / patch), p % (side / patch));
    (0..patch).flat_map(move |dy| {
        (0..patch).flat_map(move |dx| {
            let base = ((pr * patch + dy) * side + pc * patch + dx) * 3;
            base..base + 3
        })
    })
}

/// Per-patch saliency of selected output features, plus the `top_k`
/// patches of each.
pub fn localize_features(
    features: &[usize],
    tile: &Tile,
    weights: &VitWeights,
    method: SaliencyMethod,
    top_k: usize,
) -> Result<FeatureLocalization> {
    let cfg = &weights.config;
    let side = cfg.image_size;
    if tile.width() != side || tile.height() != side {
        return Err(Error::InvalidArgument(format!(
            "tile is {}x{}, model expects {side}x{side}",
            tile.width(),
            tile.height()
        )));
    }
    if let Some(&f) = features.iter().find(|&&f| f >= cfg.embed_dim) {
        return Err(Error::InvalidArgument(format!(
            "feature index {f} out of range for width {}",
            cfg.embed_dim
        )));
    }
    let g = cfg.grid_side();
    let n = cfg.num_patches();
    let pixels = scale_pixels(tile);
    let trace = forward(&pixels, weights)?;
    let gray = OCCLUSION_GRAY as f64 / 255.0;
    let maps: Vec<Vec<f64>> = match method {
        SaliencyMethod::Occlusion => {
            let base = trace.feature();
            let occluded: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|p| {
                    let mut px = pixels.clone();
                    for i in patch_pixels(side, cfg.patch_size, p) {
                        px[i] = gray;
                    }
                    Ok(forward(&px, weights)?.feature())
                })
                .collect::<Result<_>>()?;
            features
                .iter()
                .map(|&f| occluded.iter().map(|o| (base[f] - o[f]).abs()).collect())
                .collect()
        }
        SaliencyMethod::Gradient => {
            let mut mean_grad = vec![vec![0.0; pixels.len()]; features.len()];
            for step in 0..GRADIENT_STEPS {
                let alpha = (step as f64 + 0.5) / GRADIENT_STEPS as f64;
                let point: Vec<f64> = pixels.iter().map(|&x| gray + alpha * (x - gray)).collect();
                let at = forward(&point, weights)?;
                let grads: Vec<Vec<f64>> = features
                    .par_iter()
                    .map(|&f| at.feature_gradient(weights, f))
                    .collect::<Result<_>>()?;
                for (acc, g) in mean_grad.iter_mut().zip(grads) {
                    for (a, v) in acc.iter_mut().zip(g) {
                        *a += v / GRADIENT_STEPS as f64;
                    }
                }
            }
            mean_grad
                .iter()
                .map(|grad| {
                    (0..n)
                        .map(|p| {
                            patch_pixels(side, cfg.patch_size, p)
                                .map(|i| grad[i] * (pixels[i] - gray))
                                .sum::<f64>()
                                .abs()
                        })
                        .collect()
                })
                .collect()
        }
    };
    let features = features
        .iter()
        .zip(maps)
        .map(|(&feature, saliency)| FeatureSaliency {
            feature,
            top: top_patches(&saliency, g, top_k.min(n)),
            saliency,
        })
        .collect();
    Ok(FeatureLocalization {
        patch_size: cfg.patch_size,
        grid_rows: g,
        grid_cols: g,
        features,
    })
}
