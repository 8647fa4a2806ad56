//! Tile quality scoring and best-slice selection.
//!
//! A tile's composite score is `num_nuclei × clarity − blank_space`, where
//! nuclei are 8-connected blobs of dark blue-dominant pixels, clarity is the
//! variance of the Laplacian response of the luma image, and the blank term
//! is the fraction of near-white pixels scaled by a configurable weight.

pub mod io;
mod scoring;
mod tile;

pub use scoring::{
    beats, best_index, blank_fraction, clarity_laplacian, component_areas, count_nuclei,
    nucleus_mask, score_tile, select_best_slice, ScoringConfig, TileScore,
};
pub use tile::{luma, Tile};
