//! Raster tile ingestion.
//!
//! A tiles directory holds either `{slide_id}/{row}_{col}.png` tiles or a
//! single `{slide_id}.png` (or `.ppm`) per slide that is cut into a grid of
//! square tiles; right and bottom remainders are discarded.

use std::path::{Path, PathBuf};

use image::RgbImage;

use super::tile::Tile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlideLayout {
    /// Pre-cut tiles, sorted by `(row, col)`.
    Tiles(Vec<TileRef>),
    /// One large raster.
    Single(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileRef {
    pub row: usize,
    pub col: usize,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlideSource {
    pub slide_id: String,
    pub layout: SlideLayout,
}

fn is_raster(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png") | Some("ppm")
    )
}

fn parse_grid_name(p: &Path) -> Option<(usize, usize)> {
    let stem = p.file_stem()?.to_str()?;
    let (r, c) = stem.split_once('_')?;
    Some((r.parse().ok()?, c.parse().ok()?))
}

/// Lists slides under `dir`, sorted by slide id.
pub fn discover_slides(dir: &Path) -> Result<Vec<SlideSource>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut slides = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let name = entry.file_name().to_string_lossy().into_owned();
        if path.is_dir() {
            let mut tiles = Vec::new();
            for f in std::fs::read_dir(&path).map_err(|e| Error::io(&path, e))? {
                let f = f.map_err(|e| Error::io(&path, e))?.path();
                if !is_raster(&f) {
                    continue;
                }
                if let Some((row, col)) = parse_grid_name(&f) {
                    tiles.push(TileRef { row, col, path: f });
                }
            }
            if tiles.is_empty() {
                continue;
            }
            tiles.sort_by_key(|t| (t.row, t.col));
            slides.push(SlideSource {
                slide_id: name,
                layout: SlideLayout::Tiles(tiles),
            });
        } else if is_raster(&path) {
            let id = path.file_stem().unwrap().to_string_lossy().into_owned();
            slides.push(SlideSource {
                slide_id: id,
                layout: SlideLayout::Single(path),
            });
        }
    }
    slides.sort_by(|a, b| a.slide_id.cmp(&b.slide_id));
    Ok(slides)
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(img.to_rgb8())
}

pub fn load_tile(path: &Path, slide_id: &str, row: usize, col: usize) -> Result<Tile> {
    let img = read_rgb(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    Tile::at_grid(slide_id, row, col, w, h, img.into_raw())
}

/// Cuts `img` into `tile_size` squares, row-major.
pub fn grid_tiles(img: &RgbImage, slide_id: &str, tile_size: usize) -> Result<Vec<Tile>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (rows, cols) = (h / tile_size, w / tile_size);
    let mut tiles = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            tiles.push(crop(img, slide_id, r, c, tile_size)?);
        }
    }
    Ok(tiles)
}

pub fn crop(img: &RgbImage, slide_id: &str, row: usize, col: usize, tile_size: usize) -> Result<Tile> {
    let (x0, y0) = (col * tile_size, row * tile_size);
    if x0 + tile_size > img.width() as usize || y0 + tile_size > img.height() as usize {
        return Err(Error::InvalidArgument(format!(
            "tile ({row}, {col}) of size {tile_size} lies outside the {}x{} slide",
            img.width(),
            img.height()
        )));
    }
    let stride = img.width() as usize * 3;
    let raw = img.as_raw();
    let mut pixels = Vec::with_capacity(tile_size * tile_size * 3);
    for y in y0..y0 + tile_size {
        let start = y * stride + x0 * 3;
        pixels.extend_from_slice(&raw[start..start + tile_size * 3]);
    }
    Tile::at_grid(slide_id, row, col, tile_size, tile_size, pixels)
}

pub fn save_png(tile: &Tile, path: &Path) -> Result<()> {
    let img = RgbImage::from_raw(tile.width() as u32, tile.height() as u32, tile.pixels().to_vec())
        .expect("buffer length checked on construction");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

pub fn encode_png(tile: &Tile) -> Vec<u8> {
    let img = RgbImage::from_raw(tile.width() as u32, tile.height() as u32, tile.pixels().to_vec())
        .expect("buffer length checked on construction");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory png encoding");
    out.into_inner()
}
