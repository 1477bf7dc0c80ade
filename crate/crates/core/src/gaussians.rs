//! Pixel-aligned 3D Gaussians decoded from spherical depth.
//!
//! One Gaussian per valid ERP pixel: its center is the pixel ray lifted to the
//! estimated radial depth, its opacity is the matching confidence, and its
//! covariance is the pixel's footprint on a sphere of that radius (tangential
//! extents of one pixel, thin along the ray), oriented by the local tangent
//! frame `(d/dtheta, d/dphi, radial)`.

use core::f64::consts::{PI, TAU};

use nalgebra::{Rotation3, UnitQuaternion};

use crate::geom::{ErpGrid, Mat3, Pose, Vec3};
use crate::image::{DepthMap, ErpImage};
use crate::prelude::*;
use crate::sweep::DepthResult;
use crate::{Error, Result};

/// A 3D Gaussian with degree-0 color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat {
    /// World-space mean in meters.
    pub center: [f64; 3],
    /// Unit quaternion `(w, x, y, z)`.
    pub rotation: [f64; 4],
    /// Per-axis standard deviations in meters.
    pub scale: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
}

impl Splat {
    pub fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        let [w, x, y, z] = self.rotation;
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z));
        *q.to_rotation_matrix().matrix()
    }

    /// `R diag(s)^2 R^T`.
    pub fn covariance(&self) -> Mat3 {
        let r = self.rotation_matrix();
        let s = Vec3::from(self.scale);
        let rs = r * Mat3::from_diagonal(&s);
        rs * rs.transpose()
    }

    /// Quaternion unit-norm, positive finite scales, opacity in `[0, 1]`.
    pub fn is_valid(&self) -> bool {
        let qn = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        (qn - 1.0).abs() <= 1e-6
            && self.scale.iter().all(|s| *s > 0.0 && s.is_finite())
            && (0.0..=1.0).contains(&self.opacity)
            && self.center.iter().chain(&self.color).all(|v| v.is_finite())
    }
}

/// Quaternion `(w, x, y, z)` with `w >= 0` for a rotation matrix.
pub fn quaternion_from_matrix(m: &Mat3) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
    let q = q.into_inner();
    let sign = if q.w < 0.0 { -1.0 } else { 1.0 };
    [sign * q.w, sign * q.i, sign * q.j, sign * q.k]
}

/// Which view and pixel a splat was decoded from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SplatSource {
    pub view: u32,
    pub pixel: u32,
}

/// Ordered splats with per-splat provenance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplatSet {
    splats: Vec<Splat>,
    sources: Vec<SplatSource>,
}

impl SplatSet {
    pub fn new(splats: Vec<Splat>, sources: Vec<SplatSource>) -> Result<Self> {
        if splats.len() != sources.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} splats with {} provenance tags",
                splats.len(),
                sources.len()
            )));
        }
        Ok(Self { splats, sources })
    }

    /// Splats without provenance (e.g. loaded from a file); tagged view `u32::MAX`.
    pub fn from_splats(splats: Vec<Splat>) -> Self {
        let sources = (0..splats.len())
            .map(|i| SplatSource {
                view: u32::MAX,
                pixel: i as u32,
            })
            .collect();
        Self { splats, sources }
    }

    #[inline]
    pub fn splats(&self) -> &[Splat] {
        &self.splats
    }

    #[inline]
    pub fn sources(&self) -> &[SplatSource] {
        &self.sources
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.splats.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }
}

/// Concatenates sets in order, keeping provenance.
pub fn merge(sets: &[SplatSet]) -> SplatSet {
    let mut out = SplatSet::default();
    for s in sets {
        out.splats.extend_from_slice(&s.splats);
        out.sources.extend_from_slice(&s.sources);
    }
    out
}

/// World-space point per pixel; `None` where the depth is invalid.
pub fn lift_centers(depth: &DepthMap, pose: &Pose) -> Vec<Option<Vec3>> {
    let grid = depth.grid();
    crate::par::map_range(grid.len(), |i| {
        let (x, y) = (i % grid.width(), i / grid.width());
        let r = depth.data()[i];
        (r > 0.0).then(|| pose.transform_point(&(grid.pixel_direction(x, y) * r)))
    })
}

/// Columns `(d/dtheta, d/dphi, radial)`, all unit length, for a pixel direction.
pub fn tangent_frame(theta: f64, phi: f64) -> Mat3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let e_theta = Vec3::new(ct, 0.0, -st);
    let e_phi = Vec3::new(-sp * st, cp, -sp * ct);
    let radial = Vec3::new(cp * st, sp, cp * ct);
    Mat3::from_columns(&[e_theta, e_phi, radial])
}

/// Footprint standard deviations of one pixel at radius `r`.
pub fn pixel_footprint(grid: ErpGrid, phi: f64, r: f64, multiplier: f64) -> [f64; 3] {
    let dphi = PI / grid.height() as f64;
    let dtheta = TAU / grid.width() as f64;
    [
        multiplier * r * dtheta * phi.cos().max(0.05),
        multiplier * r * dphi,
        multiplier * 0.1 * r * dphi,
    ]
}

pub const DEFAULT_SCALE_MULTIPLIER: f64 = 0.3;
pub const DEFAULT_OPACITY_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplatConfig {
    /// Multiplies every footprint scale.
    pub scale_multiplier: f64,
    /// Lower bound applied to confidence-derived opacity.
    pub opacity_floor: f64,
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self {
            scale_multiplier: DEFAULT_SCALE_MULTIPLIER,
            opacity_floor: DEFAULT_OPACITY_FLOOR,
        }
    }
}

/// One splat per valid depth pixel, in row-major pixel order.
pub fn decode_splats(
    img: &ErpImage,
    depth: &DepthResult,
    pose: &Pose,
    config: &SplatConfig,
    view: u32,
) -> Result<SplatSet> {
    let grid = img.grid();
    if depth.grid() != grid || depth.confidence.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!(
            "image is {}x{} but depth is {}x{}",
            grid.width(),
            grid.height(),
            depth.grid().width(),
            depth.grid().height()
        )));
    }
    let rot = pose.rotation();
    let decoded: Vec<Option<Splat>> = crate::par::map_range(grid.len(), |i| {
        let (x, y) = (i % grid.width(), i / grid.width());
        let r = depth.depth.data()[i];
        if r <= 0.0 {
            return None;
        }
        let theta = grid.column_longitude(x);
        let phi = grid.row_latitude(y);
        let frame = tangent_frame(theta, phi);
        let center = pose.transform_point(&(frame.column(2) * r));
        let px = img.pixel(x, y);
        let color = if px.len() >= 3 {
            [px[0], px[1], px[2]]
        } else {
            [px[0]; 3]
        };
        Some(Splat {
            center: center.into(),
            rotation: quaternion_from_matrix(&(rot * frame)),
            scale: pixel_footprint(grid, phi, r, config.scale_multiplier),
            opacity: depth.confidence[i].clamp(config.opacity_floor, 1.0),
            color: color.map(|c| c.clamp(0.0, 1.0)),
        })
    });
    let mut splats = Vec::with_capacity(decoded.len());
    let mut sources = Vec::with_capacity(decoded.len());
    for (i, s) in decoded.into_iter().enumerate() {
        if let Some(s) = s {
            splats.push(s);
            sources.push(SplatSource {
                view,
                pixel: i as u32,
            });
        }
    }
    Ok(SplatSet { splats, sources })
}
