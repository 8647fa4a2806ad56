use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitConfig {
    /// Square input side `H = W`.
    pub image_size: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub mlp_hidden: usize,
    pub layer_norm_eps: f64,
}

impl Default for VitConfig {
    /// ViT-L/16 geometry: 1024-wide class token.
    fn default() -> Self {
        Self {
            image_size: 224,
            channels: 3,
            patch_size: 16,
            embed_dim: 1024,
            num_heads: 16,
            num_layers: 24,
            mlp_hidden: 4096,
            layer_norm_eps: 1e-6,
        }
    }
}

impl VitConfig {
    /// 32×32 input, two 16-pixel patches per side, width 8.
    pub fn toy() -> Self {
        Self {
            image_size: 32,
            channels: 3,
            patch_size: 16,
            embed_dim: 8,
            num_heads: 2,
            num_layers: 1,
            mlp_hidden: 16,
            layer_norm_eps: 1e-6,
        }
    }

    /// `N = H·W / P²`
    pub fn num_patches(&self) -> usize {
        self.image_size * self.image_size / (self.patch_size * self.patch_size)
    }

    pub fn grid_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    /// Flattened patch length `P²C`.
    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn num_tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.image_size == 0 || self.patch_size == 0 || self.channels == 0 {
            return bad(format!("zero-sized ViT geometry: {self:?}"));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return bad(format!(
                "image size {} is not a multiple of patch size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.embed_dim == 0 || self.num_heads == 0 || !self.embed_dim.is_multiple_of(self.num_heads) {
            return bad(format!(
                "embed dim {} is not divisible by {} heads",
                self.embed_dim, self.num_heads
            ));
        }
        if self.mlp_hidden == 0 {
            return bad("mlp hidden width must be positive".into());
        }
        if !(self.layer_norm_eps > 0.0) {
            return bad("layer norm epsilon must be positive".into());
        }
        Ok(())
    }
}
