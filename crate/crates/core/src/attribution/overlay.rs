use std::fmt::Write as _;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::localize::FeatureLocalization;
use crate::error::{Error, Result};
use crate::slide::io::encode_png;
use crate::slide::Tile;

pub const PALETTE: [&str; 10] = [
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6",
    "#bcf60c", "#fabebe",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub feature_index: usize,
    pub phi: f64,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayBox {
    pub feature_index: usize,
    /// 1-based position of the feature in the legend.
    pub label: usize,
    pub patch_row: usize,
    pub patch_col: usize,
    pub saliency: f64,
}

/// Everything needed to draw an overlay; serialized as the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub case_id: String,
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub image_png_base64: String,
    pub legend: Vec<LegendEntry>,
    pub boxes: Vec<OverlayBox>,
}

/// Builds the overlay for features in `phi` order (`(index, φ)` pairs),
/// drawing each feature's `boxes_per_feature` most salient patches.
pub fn build_overlay(
    case_id: &str,
    tile: &Tile,
    localization: &FeatureLocalization,
    phi: &[(usize, f64)],
    boxes_per_feature: usize,
) -> Result<Overlay> {
    let p = localization.patch_size;
    if localization.grid_cols * p != tile.width() || localization.grid_rows * p != tile.height() {
        return Err(Error::InvalidArgument(format!(
            "localization grid {}x{} of {p}px patches does not fit a {}x{} tile",
            localization.grid_rows,
            localization.grid_cols,
            tile.height(),
            tile.width()
        )));
    }
    let mut legend = Vec::with_capacity(phi.len());
    let mut boxes = Vec::new();
    for (i, &(feature, value)) in phi.iter().enumerate() {
        let sal = localization
            .features
            .iter()
            .find(|f| f.feature == feature)
            .ok_or_else(|| Error::InvalidArgument(format!("feature {feature} was not localized")))?;
        legend.push(LegendEntry {
            feature_index: feature,
            phi: value,
            color: PALETTE[i % PALETTE.len()].to_string(),
        });
        for t in sal.top.iter().take(boxes_per_feature) {
            boxes.push(OverlayBox {
                feature_index: feature,
                label: i + 1,
                patch_row: t.row,
                patch_col: t.col,
                saliency: t.weight,
            });
        }
    }
    Ok(Overlay {
        case_id: case_id.to_string(),
        width: tile.width(),
        height: tile.height(),
        patch_size: p,
        image_png_base64: base64::engine::general_purpose::STANDARD.encode(encode_png(tile)),
        legend,
        boxes,
    })
}

const LEGEND_ROW: usize = 14;

/// SVG with the tile, numbered patch rectangles and a legend below it.
pub fn render_svg(overlay: &Overlay) -> Result<String> {
    let (w, h, p) = (overlay.width, overlay.height, overlay.patch_size);
    let mut color_of = std::collections::HashMap::new();
    for e in &overlay.legend {
        color_of.insert(e.feature_index, e.color.as_str());
    }
    let total_h = h + 8 + LEGEND_ROW * overlay.legend.len();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{total_h}" viewBox="0 0 {w} {total_h}">"#
    );
    let _ = writeln!(
        s,
        r#"<image x="0" y="0" width="{w}" height="{h}" href="data:image/png;base64,{}"/>"#,
        overlay.image_png_base64
    );
    for b in &overlay.boxes {
        let (x, y) = (b.patch_col * p, b.patch_row * p);
        if x + p > w || y + p > h {
            return Err(Error::InvalidArgument(format!(
                "patch ({}, {}) lies outside the {w}x{h} tile",
                b.patch_row, b.patch_col
            )));
        }
        let color = color_of.get(&b.feature_index).copied().unwrap_or("#000000");
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{y}" width="{p}" height="{p}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="8" fill="{color}">{}</text>"#,
            x + 2,
            y + 9,
            b.label
        );
    }
    for (i, e) in overlay.legend.iter().enumerate() {
        let y = h + 8 + LEGEND_ROW * i;
        let _ = writeln!(
            s,
            r#"<circle cx="7" cy="{}" r="5" fill="{}"/>"#,
            y + 5,
            e.color
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" font-size="10">{}: feature {} (phi {:.6e})</text>"#,
            y + 9,
            i + 1,
            e.feature_index,
            e.phi
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
