//! Histogram of oriented gradients for pre-cropped grayscale ear images.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::ImageTooSmall {
                width,
                height,
                reason: "both sides must be at least 3 pixels",
            });
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                found: pixels.len(),
            });
        }
        if !pixels.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig("pixel intensities must lie in [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Nearest-neighbour resampling to `width × height`.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<GrayImage> {
        GrayImage::from_fn(width, height, |x, y| {
            let sx = (x * self.width) / width;
            let sy = (y * self.height) / height;
            self.get(sx.min(self.width - 1), sy.min(self.height - 1))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HogConfig {
    pub cell_px: usize,
    pub block_cells: usize,
    /// Must be a multiple of `cell_px`.
    pub block_stride_px: usize,
    pub n_bins: usize,
    pub signed: bool,
    pub epsilon: f64,
    /// Images are resized to this `(width, height)` before extraction.
    pub resize: Option<(usize, usize)>,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self {
            cell_px: 8,
            block_cells: 2,
            block_stride_px: 8,
            n_bins: 9,
            signed: false,
            epsilon: 1e-5,
            resize: Some((64, 128)),
        }
    }
}

impl HogConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.cell_px < 2 {
            return bad("cell must be at least 2 pixels");
        }
        if self.n_bins < 2 {
            return bad("need at least 2 orientation bins");
        }
        if self.block_cells == 0 {
            return bad("block must contain at least one cell");
        }
        if self.block_stride_px == 0 || !self.block_stride_px.is_multiple_of(self.cell_px) {
            return bad("block stride must be a positive multiple of the cell size");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        Ok(())
    }

    pub fn block_px(&self) -> usize {
        self.cell_px * self.block_cells
    }

    /// Number of blocks along a side of `len` pixels.
    pub fn blocks_along(&self, len: usize) -> usize {
        if len < self.block_px() {
            0
        } else {
            (len - self.block_px()) / self.block_stride_px + 1
        }
    }

    pub fn descriptor_len(&self, width: usize, height: usize) -> usize {
        self.blocks_along(width) * self.blocks_along(height) * self.block_cells * self.block_cells * self.n_bins
    }
}

/// Gradient magnitude and orientation (degrees) per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMaps {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    pub orientation: Vec<f64>,
}

/// Central differences with replicated borders. Orientation is folded into
/// `[0, 180)` when unsigned, `[0, 360)` when signed.
pub fn gradient_maps(img: &GrayImage, signed: bool) -> GradientMaps {
    let (w, h) = (img.width, img.height);
    let mut magnitude = Vec::with_capacity(w * h);
    let mut orientation = Vec::with_capacity(w * h);
    let period = if signed { 360.0 } else { 180.0 };
    for y in 0..h {
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = img.get(xr, y) - img.get(xl, y);
            let gy = img.get(x, yd) - img.get(x, yu);
            magnitude.push(libm::sqrt(gx * gx + gy * gy));
            let mut deg = libm::atan2(gy, gx).to_degrees();
            if deg < 0.0 {
                deg += 360.0;
            }
            if deg >= period {
                deg -= period;
            }
            // -0.0 and rounding at the wrap point
            if !(0.0..period).contains(&deg) {
                deg = 0.0;
            }
            orientation.push(deg);
        }
    }
    GradientMaps {
        width: w,
        height: h,
        magnitude,
        orientation,
    }
}

/// Magnitude-weighted orientation histograms per cell, with linear
/// interpolation between the two nearest bin centers (circular).
fn cell_histograms(maps: &GradientMaps, cfg: &HogConfig, cells_x: usize, cells_y: usize) -> Vec<f64> {
    let nb = cfg.n_bins;
    let period = if cfg.signed { 360.0 } else { 180.0 };
    let bin_width = period / nb as f64;
    let mut hist = vec![0.0; cells_x * cells_y * nb];
    for cy in 0..cells_y {
        for cx in 0..cells_x {
            let cell = &mut hist[(cy * cells_x + cx) * nb..(cy * cells_x + cx + 1) * nb];
            for y in cy * cfg.cell_px..(cy + 1) * cfg.cell_px {
                for x in cx * cfg.cell_px..(cx + 1) * cfg.cell_px {
                    let i = y * maps.width + x;
                    let mag = maps.magnitude[i];
                    if mag == 0.0 {
                        continue;
                    }
                    let pos = maps.orientation[i] / bin_width - 0.5;
                    let lo = libm::floor(pos);
                    let frac = pos - lo;
                    let lo_bin = (lo as i64).rem_euclid(nb as i64) as usize;
                    let hi_bin = (lo_bin + 1) % nb;
                    cell[lo_bin] += mag * (1.0 - frac);
                    cell[hi_bin] += mag * frac;
                }
            }
        }
    }
    hist
}

/// Block-normalized HOG descriptor, blocks in row-major order, cells within
/// a block row-major, then bins.
pub fn hog_descriptor(img: &GrayImage, cfg: &HogConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let (bx_n, by_n) = (cfg.blocks_along(img.width), cfg.blocks_along(img.height));
    if bx_n == 0 || by_n == 0 {
        return Err(Error::ImageTooSmall {
            width: img.width,
            height: img.height,
            reason: "smaller than one block",
        });
    }
    let maps = gradient_maps(img, cfg.signed);
    let (cells_x, cells_y) = (img.width / cfg.cell_px, img.height / cfg.cell_px);
    let hist = cell_histograms(&maps, cfg, cells_x, cells_y);
    let nb = cfg.n_bins;
    let stride_cells = cfg.block_stride_px / cfg.cell_px;
    let eps2 = cfg.epsilon * cfg.epsilon;

    let mut out = Vec::with_capacity(cfg.descriptor_len(img.width, img.height));
    let mut block = Vec::with_capacity(cfg.block_cells * cfg.block_cells * nb);
    for by in 0..by_n {
        for bx in 0..bx_n {
            block.clear();
            for cy in by * stride_cells..by * stride_cells + cfg.block_cells {
                for cx in bx * stride_cells..bx * stride_cells + cfg.block_cells {
                    let start = (cy * cells_x + cx) * nb;
                    block.extend_from_slice(&hist[start..start + nb]);
                }
            }
            let norm = libm::sqrt(block.iter().map(|v| v * v).sum::<f64>() + eps2);
            out.extend(block.iter().map(|v| v / norm));
        }
    }
    Ok(out)
}
