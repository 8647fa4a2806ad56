//! Vision Transformer forward pass: patch embedding, pre-norm multi-head
//! self-attention blocks with GELU MLPs, and class-token readout. The
//! backward pass to input pixels is used for saliency.

mod config;
mod forward;
mod weights;

pub use config::VitConfig;
pub use forward::{
    attention, embed, encode_image, forward, mlp, patchify, patchify_scaled, scale_pixels,
    AttentionOutput, ForwardTrace,
};
pub use weights::{BlockWeights, LayerNormParams, Linear, VitWeights, VIT_KIND};
