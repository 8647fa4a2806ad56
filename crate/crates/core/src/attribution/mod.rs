//! Expected-gradient attributions over the encoder and their localization
//! onto tile patches.

mod localize;
mod overlay;
mod shap;

pub use localize::{
    localize_features, FeatureLocalization, FeatureSaliency, PatchWeight, SaliencyMethod,
    GRADIENT_STEPS, OCCLUSION_GRAY,
};
pub use overlay::{build_overlay, render_svg, LegendEntry, Overlay, OverlayBox, PALETTE};
pub use shap::{
    completeness_gap, default_baselines, gradient_shap, top_k_features, Attribution,
    EncoderReadout, LinearModel, ScalarModel, ShapConfig, ShapTarget,
};
