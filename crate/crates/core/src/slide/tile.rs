use crate::error::{Error, Result};

/// An RGB tile cut from a slide.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub slide_id: String,
    pub row: usize,
    pub col: usize,
    /// Pixel offset `(x, y)` in the source slide.
    pub origin: (usize, usize),
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Tile {
    pub fn new(
        slide_id: impl Into<String>,
        row: usize,
        col: usize,
        origin: (usize, usize),
        width: usize,
        height: usize,
        pixels: Vec<u8>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "tile dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::dims("tile pixel buffer", width * height * 3, pixels.len()));
        }
        Ok(Self {
            slide_id: slide_id.into(),
            row,
            col,
            origin,
            width,
            height,
            pixels,
        })
    }

    /// Tile at grid position `(row, col)` with origin derived from its size.
    pub fn at_grid(
        slide_id: impl Into<String>,
        row: usize,
        col: usize,
        width: usize,
        height: usize,
        pixels: Vec<u8>,
    ) -> Result<Self> {
        Self::new(slide_id, row, col, (col * width, row * height), width, height, pixels)
    }

    /// Uniformly colored tile.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new("synthetic", 0, 0, (0, 0), width, height, pixels).expect("valid dimensions")
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Luma `0.299 R + 0.587 G + 0.114 B` per pixel, row-major.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect()
    }

    pub fn with_identity(mut self, slide_id: impl Into<String>, row: usize, col: usize) -> Self {
        self.slide_id = slide_id.into();
        self.row = row;
        self.col = col;
        self.origin = (col * self.width, row * self.height);
        self
    }
}

#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}
