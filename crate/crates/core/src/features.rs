//! Deterministic matching descriptors on the ERP and cubemap projections.
//!
//! Every pixel gets four channels computed from luminance on a box-downsampled
//! raster: the luminance itself, central-difference horizontal and vertical
//! gradients, and luminance minus its 3x3 mean. Luminance is first centered
//! on the panorama mean so that, after per-pixel normalization, the first
//! channel does not swamp the three contrast channels. The ERP branch wraps
//! horizontal neighborhoods across the longitude seam and clamps at the poles;
//! the cubemap branch computes the same recipe per face (clamped at face
//! edges) and stitches the result back onto the ERP matching grid. The two are
//! blended with a latitude weight so the cubemap branch dominates near the
//! poles, where ERP sampling is most distorted.

use crate::cubemap::{cubemap_to_erp, erp_to_cubemap, CubeMap};
use crate::geom::ErpGrid;
use crate::image::{sample_wrapped, ErpImage};
use crate::prelude::*;
use crate::{Error, Result};

pub const FEATURE_CHANNELS: usize = 4;

/// Vectors with a smaller L2 norm normalize to exactly zero.
const NORM_EPS: f64 = 1e-12;

/// Downsampling factors accepted by the extractors.
pub const DOWNSAMPLE_FACTORS: [usize; 4] = [1, 2, 4, 8];

/// Per-pixel descriptors on an ERP grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    grid: ErpGrid,
    channels: usize,
    data: Vec<f64>,
    normalized: bool,
}

impl FeatureMap {
    pub fn new(grid: ErpGrid, channels: usize, data: Vec<f64>, normalized: bool) -> Result<Self> {
        if channels == 0 || data.len() != grid.len() * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {}x{} pixels with {channels} channels",
                data.len(),
                grid.width(),
                grid.height()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        Ok(Self {
            grid,
            channels,
            data,
            normalized,
        })
    }

    #[inline]
    pub fn grid(&self) -> ErpGrid {
        self.grid
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.grid.width() + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Bilinear, seam-wrapped lookup at continuous pixel `(u, v)`.
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

    fn normalize_in_place(&mut self) {
        normalize_pixels(&mut self.data, self.channels);
        self.normalized = true;
    }
}

fn normalize_pixels(data: &mut [f64], channels: usize) {
    for px in data.chunks_exact_mut(channels) {
        let n = px.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n < NORM_EPS {
            px.iter_mut().for_each(|v| *v = 0.0);
        } else {
            px.iter_mut().for_each(|v| *v /= n);
        }
    }
}

fn check_downsample(factor: usize) -> Result<()> {
    if DOWNSAMPLE_FACTORS.contains(&factor) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "downsample factor {factor} not in {DOWNSAMPLE_FACTORS:?}"
        )))
    }
}

/// Mean over `factor x factor` blocks.
fn box_downsample(src: &[f64], w: usize, h: usize, factor: usize) -> Vec<f64> {
    let (ow, oh) = (w / factor, h / factor);
    let norm = 1.0 / (factor * factor) as f64;
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for j in 0..factor {
                let row = (y * factor + j) * w + x * factor;
                s += src[row..row + factor].iter().sum::<f64>();
            }
            out[y * ow + x] = s * norm;
        }
    }
    out
}

/// Four-channel descriptor of a single-channel raster. Columns wrap when
/// `wrap_x` is set and clamp otherwise; rows always clamp.
fn describe(lum: &[f64], w: usize, h: usize, wrap_x: bool) -> Vec<f64> {
    let col = |x: isize| -> usize {
        if wrap_x {
            x.rem_euclid(w as isize) as usize
        } else {
            x.clamp(0, w as isize - 1) as usize
        }
    };
    let row = |y: isize| -> usize { y.clamp(0, h as isize - 1) as usize };
    let at = |x: isize, y: isize| lum[row(y) * w + col(x)];

    let mut out = vec![0.0; w * h * FEATURE_CHANNELS];
    crate::par::for_each_chunk(&mut out, w * FEATURE_CHANNELS, |y, out_row| {
        let y = y as isize;
        for (x, px) in out_row.chunks_exact_mut(FEATURE_CHANNELS).enumerate() {
            let x = x as isize;
            let l = at(x, y);
            let mut local = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    local += at(x + dx, y + dy);
                }
            }
            px[0] = l;
            px[1] = 0.5 * (at(x + 1, y) - at(x - 1, y));
            px[2] = 0.5 * (at(x, y + 1) - at(x, y - 1));
            px[3] = l - local / 9.0;
        }
    });
    out
}

/// Luminance minus its mean over all ERP pixels.
fn centered_luminance(img: &ErpImage) -> Vec<f64> {
    let mut lum = img.luminance();
    let mean = lum.iter().sum::<f64>() / lum.len() as f64;
    lum.iter_mut().for_each(|l| *l -= mean);
    lum
}

/// ERP-branch descriptors on the `1/downsample` matching grid.
pub fn extract_erp_features(
    img: &ErpImage,
    downsample: usize,
    normalize: bool,
) -> Result<FeatureMap> {
    check_downsample(downsample)?;
    let grid = img.grid().downsampled(downsample)?;
    let lum = box_downsample(
        &centered_luminance(img),
        img.width(),
        img.height(),
        downsample,
    );
    let data = describe(&lum, grid.width(), grid.height(), true);
    let mut fm = FeatureMap::new(grid, FEATURE_CHANNELS, data, false)?;
    if normalize {
        fm.normalize_in_place();
    }
    Ok(fm)
}

/// Cubemap-branch descriptors: the same recipe per face at
/// `face_size / downsample`, stitched onto the ERP matching grid.
pub fn extract_cp_features(
    img: &ErpImage,
    face_size: usize,
    downsample: usize,
    normalize: bool,
) -> Result<FeatureMap> {
    check_downsample(downsample)?;
    let grid = img.grid().downsampled(downsample)?;
    if !face_size.is_multiple_of(downsample) || face_size / downsample < 2 {
        return Err(Error::InvalidArgument(format!(
            "face size {face_size} is not a multiple of {downsample} (or too small)"
        )));
    }
    let lum = ErpImage::new(img.grid(), 1, centered_luminance(img))?;
    let cm = erp_to_cubemap(&lum, face_size)?;
    let n = face_size / downsample;
    let faces = cm
        .faces()
        .iter()
        .map(|face| {
            let small = box_downsample(face, face_size, face_size, downsample);
            let mut d = describe(&small, n, n, false);
            if normalize {
                normalize_pixels(&mut d, FEATURE_CHANNELS);
            }
            d
        })
        .collect();
    let described = CubeMap::new(n, FEATURE_CHANNELS, faces)?;
    let stitched = cubemap_to_erp(&described, grid);
    let mut fm = FeatureMap::new(grid, FEATURE_CHANNELS, stitched.into_data(), false)?;
    if normalize {
        fm.normalize_in_place();
    }
    Ok(fm)
}

/// Cubemap-branch weight at latitude `phi`: 0 on the equator, 1 at the poles.
#[inline]
pub fn fusion_weight(phi: f64) -> f64 {
    1.0 - phi.cos()
}

/// Per-pixel convex blend `w * cp + (1 - w) * erp` with [`fusion_weight`];
/// renormalized when the ERP input is normalized.
pub fn fuse_biprojection(f_erp: &FeatureMap, f_cp: &FeatureMap) -> Result<FeatureMap> {
    if f_erp.grid != f_cp.grid || f_erp.channels != f_cp.channels {
        return Err(Error::ShapeMismatch(
            "bi-projection features differ in grid or channel count".into(),
        ));
    }
    let grid = f_erp.grid;
    let row_len = grid.width() * f_erp.channels;
    let mut data = vec![0.0; f_erp.data.len()];
    crate::par::for_each_chunk(&mut data, row_len, |y, out| {
        let w = fusion_weight(grid.row_latitude(y));
        let base = y * row_len;
        for (i, o) in out.iter_mut().enumerate() {
            *o = w * f_cp.data[base + i] + (1.0 - w) * f_erp.data[base + i];
        }
    });
    let mut fm = FeatureMap::new(grid, f_erp.channels, data, false)?;
    if f_erp.normalized {
        fm.normalize_in_place();
    }
    Ok(fm)
}
