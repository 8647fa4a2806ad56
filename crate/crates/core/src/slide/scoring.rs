use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tile::{luma, Tile};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    /// Luma ceiling for nucleus-like pixels.
    pub dark_threshold: f64,
    /// Minimum component area in pixels.
    pub min_area: usize,
    /// A pixel is blank when `min(R, G, B)` reaches this value.
    pub brightness_threshold: u8,
    /// Multiplier turning the blank fraction into the penalty term.
    pub blank_weight: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            dark_threshold: 120.0,
            min_area: 30,
            brightness_threshold: 220,
            blank_weight: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileScore {
    pub num_nuclei: usize,
    pub clarity: f64,
    pub blank_fraction: f64,
    /// `blank_fraction × blank_weight`.
    pub blank_space: f64,
    pub score: f64,
}

impl TileScore {
    pub fn compose(num_nuclei: usize, clarity: f64, blank_fraction: f64, blank_weight: f64) -> Self {
        let blank_space = blank_fraction * blank_weight;
        Self {
            num_nuclei,
            clarity,
            blank_fraction,
            blank_space,
            score: num_nuclei as f64 * clarity - blank_space,
        }
    }
}

/// Blue-dominant dark pixels.
pub fn nucleus_mask(tile: &Tile, config: &ScoringConfig) -> Vec<bool> {
    tile.pixels()
        .chunks_exact(3)
        .map(|p| p[2] > p[0] && luma(p[0], p[1], p[2]) < config.dark_threshold)
        .collect()
}

/// Areas of the 8-connected components of `mask`, in scan order of their
/// first pixel.
pub fn component_areas(mask: &[bool], width: usize, height: usize) -> Vec<usize> {
    let mut seen = vec![false; mask.len()];
    let mut areas = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut area = 0;
        while let Some(p) = stack.pop() {
            area += 1;
            let (x, y) = ((p % width) as isize, (p / width) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                        continue;
                    }
                    let q = ny as usize * width + nx as usize;
                    if mask[q] && !seen[q] {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        areas.push(area);
    }
    areas
}

pub fn count_nuclei(tile: &Tile, config: &ScoringConfig) -> usize {
    let mask = nucleus_mask(tile, config);
    component_areas(&mask, tile.width(), tile.height())
        .into_iter()
        .filter(|&a| a >= config.min_area)
        .count()
}

/// Variance of the 4-neighbour Laplacian response over interior pixels.
pub fn clarity_laplacian(tile: &Tile) -> f64 {
    let (w, h) = (tile.width(), tile.height());
    if w < 3 || h < 3 {
        return 0.0;
    }
    let g = tile.luma();
    let n = ((w - 2) * (h - 2)) as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let c = y * w + x;
            let r = g[c - w] + g[c + w] + g[c - 1] + g[c + 1] - 4.0 * g[c];
            sum += r;
            sum_sq += r * r;
        }
    }
    let mean = sum / n;
    (sum_sq / n - mean * mean).max(0.0)
}

pub fn blank_fraction(tile: &Tile, brightness_threshold: u8) -> f64 {
    let blank = tile
        .pixels()
        .chunks_exact(3)
        .filter(|p| p[0].min(p[1]).min(p[2]) >= brightness_threshold)
        .count();
    blank as f64 / (tile.width() * tile.height()) as f64
}

pub fn score_tile(tile: &Tile, config: &ScoringConfig) -> TileScore {
    TileScore::compose(
        count_nuclei(tile, config),
        clarity_laplacian(tile),
        blank_fraction(tile, config.brightness_threshold),
        config.blank_weight,
    )
}

/// True when `a` should be preferred over `b`: higher score, then lower
/// `origin.y`, then lower `origin.x`, then slide id.
pub fn beats(a: (&Tile, &TileScore), b: (&Tile, &TileScore)) -> bool {
    if a.1.score != b.1.score {
        return a.1.score > b.1.score;
    }
    let ka = (a.0.origin.1, a.0.origin.0, &a.0.slide_id);
    let kb = (b.0.origin.1, b.0.origin.0, &b.0.slide_id);
    ka < kb
}

/// Index of the winning entry in an already-scored list.
pub fn best_index(tiles: &[Tile], scores: &[TileScore]) -> Result<usize> {
    if tiles.is_empty() {
        return Err(Error::NoTiles);
    }
    let mut best = 0;
    for i in 1..tiles.len() {
        if beats((&tiles[i], &scores[i]), (&tiles[best], &scores[best])) {
            best = i;
        }
    }
    Ok(best)
}

/// Scores every tile (in parallel) and returns the best one.
pub fn select_best_slice(tiles: &[Tile], config: &ScoringConfig) -> Result<(Tile, TileScore)> {
    if tiles.is_empty() {
        return Err(Error::NoTiles);
    }
    let scores: Vec<TileScore> = tiles.par_iter().map(|t| score_tile(t, config)).collect();
    let i = best_index(tiles, &scores)?;
    Ok((tiles[i].clone(), scores[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    const WHITE: [u8; 3] = [255, 255, 255];
    const NUCLEUS: [u8; 3] = [60, 40, 140];

    fn disk(tile: &mut Tile, cx: f64, cy: f64, r: f64) {
        for y in 0..tile.height() {
            for x in 0..tile.width() {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                if dx * dx + dy * dy <= r * r {
                    tile.set_rgb(x, y, NUCLEUS);
                }
            }
        }
    }

    #[test]
    fn white_tile() {
        let t = Tile::filled(32, 32, WHITE);
        let cfg = ScoringConfig::default();
        assert_eq!(count_nuclei(&t, &cfg), 0);
        assert_eq!(clarity_laplacian(&t), 0.0);
        assert_eq!(blank_fraction(&t, 220), 1.0);
        let s = score_tile(&t, &cfg);
        assert_eq!(s.score, -cfg.blank_weight);
    }

    #[test]
    fn black_and_half_blank() {
        let t = Tile::filled(10, 10, [0, 0, 0]);
        assert_eq!(blank_fraction(&t, 220), 0.0);
        let mut h = Tile::filled(10, 10, [0, 0, 0]);
        for y in 0..5 {
            for x in 0..10 {
                h.set_rgb(x, y, WHITE);
            }
        }
        assert_eq!(blank_fraction(&h, 220), 0.5);
    }

    #[test]
    fn constant_gray_has_zero_clarity() {
        assert_eq!(clarity_laplacian(&Tile::filled(16, 16, [128, 128, 128])), 0.0);
    }

    #[test]
    fn merged_disks_count_once() {
        let mut t = Tile::filled(80, 60, WHITE);
        disk(&mut t, 30.0, 30.0, 10.0);
        disk(&mut t, 42.0, 30.0, 10.0);
        assert_eq!(count_nuclei(&t, &ScoringConfig::default()), 1);
    }

    #[test]
    fn diagonal_pixels_connect() {
        let mask = vec![true, false, false, true];
        assert_eq!(component_areas(&mask, 2, 2), vec![2]);
    }

    #[test]
    fn small_specks_are_ignored() {
        let mut t = Tile::filled(40, 40, WHITE);
        disk(&mut t, 20.0, 20.0, 2.0);
        assert_eq!(count_nuclei(&t, &ScoringConfig::default()), 0);
    }

    #[test]
    fn composite_formula() {
        let s = TileScore::compose(10, 2.0, 0.005, 1000.0);
        assert_eq!(s.score, 15.0);
    }

    #[test]
    fn tie_break_prefers_smaller_origin() {
        let cfg = ScoringConfig::default();
        let base = Tile::filled(8, 8, [128, 128, 128]);
        let tiles = vec![
            base.clone().with_identity("s", 1, 0),
            base.clone().with_identity("s", 0, 1),
            base.clone().with_identity("s", 1, 1),
        ];
        let (best, _) = select_best_slice(&tiles, &cfg).unwrap();
        assert_eq!((best.row, best.col), (0, 1));
        assert!(matches!(select_best_slice(&[], &cfg), Err(Error::NoTiles)));
    }
}
