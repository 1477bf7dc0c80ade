//! Spherical-sweep cost volume, residual refinement and softmax depth.
//!
//! For every reference pixel and every radial depth candidate the pixel ray is
//! lifted to a 3D point, carried into each source camera, and projected back
//! onto the source panorama. Because the projection is spherical every point
//! lands on a valid source pixel, including points behind the source camera
//! that a planar sweep would have to discard.

use crate::features::{extract_cp_features, extract_erp_features, fuse_biprojection, FeatureMap};
use crate::geom::{ErpGrid, Pose, Vec3};
use crate::image::{DepthMap, ErpImage};
use crate::prelude::*;
use crate::{Error, Result};

pub const DEFAULT_NEAR: f64 = 0.1;
pub const DEFAULT_FAR: f64 = 10.0;
pub const DEFAULT_CANDIDATES: usize = 128;

/// Radial depth hypotheses, log-spaced between `near` and `far` inclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthCandidates {
    near: f64,
    far: f64,
    values: Vec<f64>,
}

impl DepthCandidates {
    pub fn new(near: f64, far: f64, count: usize) -> Result<Self> {
        if !(near > 0.0 && far > near && far.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "depth range must satisfy 0 < near < far, got [{near}, {far}]"
            )));
        }
        if count < 2 {
            return Err(Error::InvalidArgument(format!(
                "need >= 2 candidates, got {count}"
            )));
        }
        let ratio = far / near;
        let last = (count - 1) as f64;
        let mut values: Vec<f64> = (0..count)
            .map(|k| near * ratio.powf(k as f64 / last))
            .collect();
        values[0] = near;
        values[count - 1] = far;
        Ok(Self { near, far, values })
    }

    #[inline]
    pub fn near(&self) -> f64 {
        self.near
    }

    #[inline]
    pub fn far(&self) -> f64 {
        self.far
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Default for DepthCandidates {
    fn default() -> Self {
        Self::new(DEFAULT_NEAR, DEFAULT_FAR, DEFAULT_CANDIDATES).expect("valid defaults")
    }
}

/// Shorthand for [`DepthCandidates::new`].
pub fn make_candidates(near: f64, far: f64, count: usize) -> Result<DepthCandidates> {
    DepthCandidates::new(near, far, count)
}

/// `H x W x D` matching scores, depth fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    grid: ErpGrid,
    candidates: DepthCandidates,
    data: Vec<f64>,
}

impl CostVolume {
    pub fn new(grid: ErpGrid, candidates: DepthCandidates, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() * candidates.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} scores for {} pixels x {} candidates",
                data.len(),
                grid.len(),
                candidates.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "cost volume entries must be finite".into(),
            ));
        }
        Ok(Self {
            grid,
            candidates,
            data,
        })
    }

    #[inline]
    pub fn grid(&self) -> ErpGrid {
        self.grid
    }

    #[inline]
    pub fn candidates(&self) -> &DepthCandidates {
        &self.candidates
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Scores of pixel `(x, y)` across all candidates.
    #[inline]
    pub fn scores(&self, x: usize, y: usize) -> &[f64] {
        let d = self.candidates.len();
        let i = (y * self.grid.width() + x) * d;
        &self.data[i..i + d]
    }
}

/// Builds the volume by correlating reference features with source features
/// sampled at every depth hypothesis; scores are averaged over sources.
pub fn build_cost_volume(
    f_ref: &FeatureMap,
    f_src: &[FeatureMap],
    pose_ref: &Pose,
    pose_src: &[Pose],
    candidates: &DepthCandidates,
) -> Result<CostVolume> {
    if f_src.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one source view".into(),
        ));
    }
    if f_src.len() != pose_src.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} source feature maps but {} source poses",
            f_src.len(),
            pose_src.len()
        )));
    }
    let grid = f_ref.grid();
    let ch = f_ref.channels();
    if let Some(i) = f_src
        .iter()
        .position(|f| f.grid() != grid || f.channels() != ch)
    {
        return Err(Error::ShapeMismatch(format!(
            "source view {i} features do not match the reference grid/channels"
        )));
    }

    let relative: Vec<Pose> = pose_src
        .iter()
        .map(|p| Pose::relative(pose_ref, p))
        .collect();
    let depths = candidates.values();
    let d = depths.len();
    let scale = 1.0 / (ch as f64).sqrt();
    let inv_sources = 1.0 / f_src.len() as f64;
    let w = grid.width();

    let mut data = vec![0.0; grid.len() * d];
    crate::par::for_each_chunk(&mut data, w * d, |y, row| {
        let mut sample = vec![0.0; ch];
        for x in 0..w {
            let reference = f_ref.pixel(x, y);
            let ray = grid.pixel_direction(x, y);
            let out = &mut row[x * d..(x + 1) * d];
            for (src, rel) in f_src.iter().zip(&relative) {
                let origin = rel.translation();
                let dir = rel.transform_vector(&ray);
                for (m, &r) in depths.iter().enumerate() {
                    let p: Vec3 = dir * r + origin;
                    let (u, v) = grid.project(&p);
                    src.sample_into(u, v, &mut sample);
                    let dot: f64 = reference.iter().zip(&sample).map(|(a, b)| a * b).sum();
                    out[m] += dot * scale;
                }
            }
            out.iter_mut().for_each(|s| *s *= inv_sources);
        }
    });
    CostVolume::new(grid, candidates.clone(), data)
}

/// Residual refinement `cv + (box(cv) - cv)` with a `(2r+1)^2` box per depth
/// slice, wrapped across the seam and clamped at the poles. `radius == 0`
/// returns the input unchanged.
pub fn refine_cost_volume(cv: &CostVolume, radius: usize) -> CostVolume {
    if radius == 0 {
        return cv.clone();
    }
    let (w, h, d) = (cv.grid.width(), cv.grid.height(), cv.candidates.len());
    let r = radius as isize;
    let norm = 1.0 / ((2 * radius + 1) * (2 * radius + 1)) as f64;

    let mut horiz = vec![0.0; cv.data.len()];
    crate::par::for_each_chunk(&mut horiz, w * d, |y, row| {
        for x in 0..w {
            let out = &mut row[x * d..(x + 1) * d];
            for dx in -r..=r {
                let sx = (x as isize + dx).rem_euclid(w as isize) as usize;
                let src = &cv.data[(y * w + sx) * d..(y * w + sx + 1) * d];
                out.iter_mut().zip(src).for_each(|(o, s)| *o += s);
            }
        }
    });
    let mut data = vec![0.0; cv.data.len()];
    crate::par::for_each_chunk(&mut data, w * d, |y, row| {
        for x in 0..w {
            let out = &mut row[x * d..(x + 1) * d];
            for dy in -r..=r {
                let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                let src = &horiz[(sy * w + x) * d..(sy * w + x + 1) * d];
                out.iter_mut().zip(src).for_each(|(o, s)| *o += s);
            }
            let base = &cv.data[(y * w + x) * d..(y * w + x + 1) * d];
            for (o, c) in out.iter_mut().zip(base) {
                let residual = *o * norm - c;
                *o = c + residual;
            }
        }
    });
    CostVolume {
        grid: cv.grid,
        candidates: cv.candidates.clone(),
        data,
    }
}

/// Expected radial depth and matching confidence per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthResult {
    pub depth: DepthMap,
    /// Largest softmax probability per pixel, in `(0, 1]`.
    pub confidence: Vec<f64>,
}

impl DepthResult {
    pub fn grid(&self) -> ErpGrid {
        self.depth.grid()
    }

    /// Confidence as a raster on the depth grid (for export alongside depth).
    pub fn confidence_map(&self) -> DepthMap {
        DepthMap::new(self.depth.grid(), self.confidence.clone())
            .expect("confidence is finite and positive")
    }

    /// Bilinear seam-wrapped upsampling of depth and confidence.
    pub fn resample(&self, grid: ErpGrid) -> DepthResult {
        let conf = self.confidence_map().resample(grid);
        DepthResult {
            depth: self.depth.resample(grid),
            confidence: conf.into_data(),
        }
    }
}

/// Softmax over candidates (max-subtracted), then `depth = sum p_m r_m` and
/// `confidence = max p_m`.
pub fn softmax_depth(cv: &CostVolume, temperature: f64) -> Result<DepthResult> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let grid = cv.grid;
    let cands = &cv.candidates;
    let (near, far) = (cands.near(), cands.far());
    let d = cands.len();
    let inv_t = 1.0 / temperature;
    let pixels: Vec<(f64, f64)> = crate::par::map_range(grid.len(), |i| {
        let scores = &cv.data[i * d..(i + 1) * d];
        softmax_expectation(scores, cands.values(), inv_t, near, far)
    });
    let (depth, confidence): (Vec<f64>, Vec<f64>) = pixels.into_iter().unzip();
    Ok(DepthResult {
        depth: DepthMap::new(grid, depth)?,
        confidence,
    })
}

#[inline]
fn softmax_expectation(
    scores: &[f64],
    values: &[f64],
    inv_t: f64,
    near: f64,
    far: f64,
) -> (f64, f64) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut num, mut peak) = (0.0, 0.0, 0.0f64);
    for (s, r) in scores.iter().zip(values) {
        let e = ((s - max) * inv_t).exp();
        z += e;
        num += e * r;
        peak = peak.max(e);
    }
    ((num / z).clamp(near, far), peak / z)
}

/// Cubemap branch of the bi-projection features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CubemapBranch {
    /// ERP features only.
    Disabled,
    /// Face size `W / 4`, rounded down to a multiple of the downsample factor.
    Auto,
    FaceSize(usize),
}

impl CubemapBranch {
    pub fn face_size(self, grid: ErpGrid, downsample: usize) -> Option<usize> {
        match self {
            CubemapBranch::Disabled => None,
            CubemapBranch::Auto => {
                let n = (grid.width() / 4) / downsample * downsample;
                Some(n.max(2 * downsample))
            }
            CubemapBranch::FaceSize(n) => Some(n),
        }
    }
}

/// Knobs for [`estimate_depth`].
#[derive(Debug, Clone, PartialEq)]
pub struct DepthConfig {
    pub near: f64,
    pub far: f64,
    pub num_candidates: usize,
    /// Matching resolution is `1 / downsample` of the input.
    pub downsample: usize,
    pub temperature: f64,
    /// Box radius of the residual cost-volume refinement (0 disables it).
    pub refine_radius: usize,
    pub cubemap: CubemapBranch,
    pub normalize_features: bool,
}

pub const DEFAULT_DOWNSAMPLE: usize = 2;
pub const DEFAULT_TEMPERATURE: f64 = 1e-3;
pub const DEFAULT_REFINE_RADIUS: usize = 4;

impl Default for DepthConfig {
    fn default() -> Self {
        Self {
            near: DEFAULT_NEAR,
            far: DEFAULT_FAR,
            num_candidates: DEFAULT_CANDIDATES,
            downsample: DEFAULT_DOWNSAMPLE,
            temperature: DEFAULT_TEMPERATURE,
            refine_radius: DEFAULT_REFINE_RADIUS,
            cubemap: CubemapBranch::Auto,
            normalize_features: true,
        }
    }
}

/// Matching features for one panorama under `config`.
pub fn view_features(img: &ErpImage, config: &DepthConfig) -> Result<FeatureMap> {
    let erp = extract_erp_features(img, config.downsample, config.normalize_features)?;
    match config.cubemap.face_size(img.grid(), config.downsample) {
        None => Ok(erp),
        Some(face) => {
            let cp = extract_cp_features(img, face, config.downsample, config.normalize_features)?;
            fuse_biprojection(&erp, &cp)
        }
    }
}

/// Depth for every view, each matched against all the others, upsampled to the
/// input resolution.
pub fn estimate_depth(
    images: &[ErpImage],
    poses: &[Pose],
    config: &DepthConfig,
) -> Result<Vec<DepthResult>> {
    if images.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "depth estimation needs at least 2 views, got {}",
            images.len()
        )));
    }
    if images.len() != poses.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} images but {} poses",
            images.len(),
            poses.len()
        )));
    }
    let full = images[0].grid();
    if let Some(i) = images.iter().position(|img| img.grid() != full) {
        return Err(Error::ShapeMismatch(format!(
            "view {i} is on a different grid"
        )));
    }
    let candidates = DepthCandidates::new(config.near, config.far, config.num_candidates)?;
    let features = images
        .iter()
        .map(|img| view_features(img, config))
        .collect::<Result<Vec<_>>>()?;

    (0..images.len())
        .map(|i| {
            let others: Vec<usize> = (0..images.len()).filter(|&j| j != i).collect();
            let src_f: Vec<FeatureMap> = others.iter().map(|&j| features[j].clone()).collect();
            let src_p: Vec<Pose> = others.iter().map(|&j| poses[j]).collect();
            let cv = build_cost_volume(&features[i], &src_f, &poses[i], &src_p, &candidates)?;
            let cv = refine_cost_volume(&cv, config.refine_radius);
            Ok(softmax_depth(&cv, config.temperature)?.resample(full))
        })
        .collect()
}
