//! Panoramic rasters and seam-aware resampling.

use crate::geom::ErpGrid;
use crate::prelude::*;
use crate::{Error, Result};

/// Multi-channel equirectangular raster, row-major from the top (north) row,
/// channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct ErpImage {
    grid: ErpGrid,
    channels: usize,
    data: Vec<f64>,
}

impl ErpImage {
    pub fn new(grid: ErpGrid, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidArgument(
                "image needs at least one channel".into(),
            ));
        }
        if data.len() != grid.len() * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{}x{channels} image",
                data.len(),
                grid.width(),
                grid.height()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at index {i}"
            )));
        }
        Ok(Self {
            grid,
            channels,
            data,
        })
    }

    pub fn filled(grid: ErpGrid, channels: usize, value: &[f64]) -> Self {
        assert_eq!(value.len(), channels);
        let data = value
            .iter()
            .copied()
            .cycle()
            .take(grid.len() * channels)
            .collect();
        Self {
            grid,
            channels,
            data,
        }
    }

    /// Builds an image from a per-pixel closure writing `channels` values.
    pub fn from_fn<F>(grid: ErpGrid, channels: usize, f: F) -> Self
    where
        F: Fn(usize, usize, &mut [f64]) + Send + Sync,
    {
        let mut data = vec![0.0; grid.len() * channels];
        let w = grid.width();
        crate::par::for_each_chunk(&mut data, w * channels, |y, row| {
            for (x, px) in row.chunks_exact_mut(channels).enumerate() {
                f(x, y, px);
            }
        });
        Self {
            grid,
            channels,
            data,
        }
    }

    #[inline]
    pub fn grid(&self) -> ErpGrid {
        self.grid
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height()
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.grid.width() + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Bilinear sample at continuous `(u, v)`; wraps across the longitude seam
    /// and clamps at the poles.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.channels];
        self.sample_into(u, v, &mut out);
        out
    }

    #[inline]
    pub fn sample_into(&self, u: f64, v: f64, out: &mut [f64]) {
        sample_wrapped(
            &self.data,
            self.grid.width(),
            self.grid.height(),
            self.channels,
            u,
            v,
            out,
        );
    }

    /// Bilinear resampling onto another ERP grid.
    pub fn resample(&self, grid: ErpGrid) -> ErpImage {
        let sx = self.width() as f64 / grid.width() as f64;
        let sy = self.height() as f64 / grid.height() as f64;
        ErpImage::from_fn(grid, self.channels, |x, y, px| {
            self.sample_into((x as f64 + 0.5) * sx, (y as f64 + 0.5) * sy, px)
        })
    }

    /// Rotates the panorama about the vertical axis by `k` whole columns
    /// (column `x` moves to `x + k`).
    pub fn roll_columns(&self, k: isize) -> ErpImage {
        let w = self.width() as isize;
        ErpImage::from_fn(self.grid, self.channels, |x, y, px| {
            let src = (x as isize - k).rem_euclid(w) as usize;
            px.copy_from_slice(self.pixel(src, y));
        })
    }

    /// Rec. 601 luma for 3+ channel images, the channel mean otherwise.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(self.channels)
            .map(luminance)
            .collect()
    }
}

#[inline]
pub(crate) fn luminance(px: &[f64]) -> f64 {
    if px.len() >= 3 {
        0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
    } else {
        px.iter().sum::<f64>() / px.len() as f64
    }
}

/// Bilinear lookup into an interleaved ERP raster. Pixel `k` sits at `k + 0.5`;
/// columns wrap modulo `width`, rows clamp to the first/last row.
#[inline]
pub(crate) fn sample_wrapped(
    data: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    u: f64,
    v: f64,
    out: &mut [f64],
) {
    let x = u - 0.5;
    let y = (v - 0.5).clamp(0.0, (height - 1) as f64);
    let x0f = x.floor();
    let fx = x - x0f;
    let x0 = (x0f as i64).rem_euclid(width as i64) as usize;
    let x1 = if x0 + 1 == width { 0 } else { x0 + 1 };
    let y0 = (y.floor() as usize).min(height - 1);
    let fy = y - y0 as f64;
    let y1 = (y0 + 1).min(height - 1);

    let w00 = (1.0 - fx) * (1.0 - fy);
    let w10 = fx * (1.0 - fy);
    let w01 = (1.0 - fx) * fy;
    let w11 = fx * fy;
    let i00 = (y0 * width + x0) * channels;
    let i10 = (y0 * width + x1) * channels;
    let i01 = (y1 * width + x0) * channels;
    let i11 = (y1 * width + x1) * channels;
    for (c, o) in out.iter_mut().enumerate() {
        *o = w00 * data[i00 + c] + w10 * data[i10 + c] + w01 * data[i01 + c] + w11 * data[i11 + c];
    }
}

/// Per-pixel spherical radial depth in meters; `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    grid: ErpGrid,
    data: Vec<f64>,
}

impl DepthMap {
    pub const INVALID: f64 = 0.0;

    pub fn new(grid: ErpGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} depth values for a {}x{} grid",
                data.len(),
                grid.width(),
                grid.height()
            )));
        }
        if let Some(i) = data.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "depth at index {i} is {} (must be finite and >= 0)",
                data[i]
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn filled(grid: ErpGrid, depth: f64) -> Self {
        Self {
            grid,
            data: vec![depth; grid.len()],
        }
    }

    #[inline]
    pub fn grid(&self) -> ErpGrid {
        self.grid
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.grid.width() + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.get(x, y) > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| **d > 0.0).count()
    }

    /// Bilinear seam-wrapped resampling onto another grid. Invalid pixels are
    /// not treated specially; callers resample fully valid maps.
    pub fn resample(&self, grid: ErpGrid) -> DepthMap {
        let img = ErpImage {
            grid: self.grid,
            channels: 1,
            data: self.data.clone(),
        };
        DepthMap {
            grid,
            data: img.resample(grid).data,
        }
    }
}
