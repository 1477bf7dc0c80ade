//! Equirectangular pixel <-> spherical angle <-> Cartesian maps, and rigid poses.
//!
//! Conventions:
//! * camera frame is x = left-to-right across the panorama's `theta = pi/2`
//!   column, y = up, z = forward (the ERP center column);
//! * `theta` (longitude) lives in `(-pi, pi]`, `phi` (latitude) in
//!   `[-pi/2, pi/2]`;
//! * integer pixel `k` samples the continuous coordinate `k + 0.5`, so the
//!   `theta = pi` seam and both poles fall on pixel boundaries.

use core::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{Matrix3, Matrix4, Vector3};

use crate::prelude::*;
use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance used when validating externally supplied rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Pixel lattice of a full-sphere equirectangular raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ErpGrid {
    width: usize,
    height: usize,
}

impl ErpGrid {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if height < 2 || !height.is_multiple_of(2) || width != 2 * height {
            return Err(Error::InvalidGrid { width, height });
        }
        Ok(Self { width, height })
    }

    /// Grid with the given height and the standard 2:1 aspect.
    pub fn with_height(height: usize) -> Result<Self> {
        Self::new(2 * height, height)
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
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid shrunk by an integer factor; errors when the result is not a valid grid.
    pub fn downsampled(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.width.is_multiple_of(factor) || !self.height.is_multiple_of(factor)
        {
            return Err(Error::InvalidArgument(format!(
                "{}x{} grid is not divisible by {factor}",
                self.width, self.height
            )));
        }
        Self::new(self.width / factor, self.height / factor)
    }

    /// Latitude of the center of pixel row `y`.
    #[inline]
    pub fn row_latitude(&self, y: usize) -> f64 {
        (0.5 - (y as f64 + 0.5) / self.height as f64) * PI
    }

    /// Longitude of the center of pixel column `x`.
    #[inline]
    pub fn column_longitude(&self, x: usize) -> f64 {
        normalize_longitude((0.5 - (x as f64 + 0.5) / self.width as f64) * TAU)
    }

    /// Unit ray through the center of pixel `(x, y)`.
    #[inline]
    pub fn pixel_direction(&self, x: usize, y: usize) -> Vec3 {
        SphericalCoord::direction(self.column_longitude(x), self.row_latitude(y)).to_cartesian()
    }

    /// Continuous `(u, v)` pixel position of a camera-frame point; the zero
    /// vector maps to the forward direction.
    #[inline]
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        let s = SphericalCoord::from_cartesian(p)
            .unwrap_or_else(|_| SphericalCoord::direction(0.0, 0.0));
        self.spherical_to_pixel(&s)
    }

    /// Continuous pixel `(u, v)` to a unit direction.
    pub fn pixel_to_spherical(&self, u: f64, v: f64) -> Result<SphericalCoord> {
        let h = self.height as f64;
        if !(0.0..=h).contains(&v) || !u.is_finite() {
            return Err(Error::Domain(format!(
                "pixel ({u}, {v}) outside 0 <= v <= {h}"
            )));
        }
        let theta = (0.5 - u / self.width as f64) * TAU;
        let phi = (0.5 - v / h) * PI;
        Ok(SphericalCoord::direction(theta, phi))
    }

    /// Inverse of [`pixel_to_spherical`](Self::pixel_to_spherical); `u` wraps
    /// into `[0, W)` and `v` is clamped into `[0, H]`.
    pub fn spherical_to_pixel(&self, s: &SphericalCoord) -> (f64, f64) {
        let w = self.width as f64;
        let h = self.height as f64;
        let mut u = wrap((0.5 - s.theta / TAU) * w, w);
        // the remainder can round up to exactly w for tiny negative inputs.
        if u >= w {
            u = 0.0;
        }
        let v = ((0.5 - s.phi / PI) * h).clamp(0.0, h);
        (u, v)
    }
}

/// Euclidean remainder of `a` by positive `m`.
#[inline]
pub(crate) fn wrap(a: f64, m: f64) -> f64 {
    let r = a % m;
    if r < 0.0 {
        r + m
    } else {
        r
    }
}

/// Wraps an angle into `(-pi, pi]`.
#[inline]
pub fn normalize_longitude(theta: f64) -> f64 {
    let t = wrap(theta, TAU);
    if t > PI {
        t - TAU
    } else {
        t
    }
}

/// A point or direction in spherical coordinates around a camera center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    /// Longitude in `(-pi, pi]`.
    pub theta: f64,
    /// Latitude in `[-pi/2, pi/2]`.
    pub phi: f64,
    /// Radial distance; `1` for pure directions.
    pub r: f64,
}

impl SphericalCoord {
    /// Canonicalizes the angles; `phi` is clamped to the poles.
    pub fn new(theta: f64, phi: f64, r: f64) -> Self {
        Self {
            theta: normalize_longitude(theta),
            phi: phi.clamp(-FRAC_PI_2, FRAC_PI_2),
            r,
        }
    }

    pub fn direction(theta: f64, phi: f64) -> Self {
        Self::new(theta, phi, 1.0)
    }

    pub fn with_radius(self, r: f64) -> Self {
        Self { r, ..self }
    }

    pub fn to_cartesian(&self) -> Vec3 {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vec3::new(self.r * cp * st, self.r * sp, self.r * cp * ct)
    }

    /// `theta` is defined as 0 on the polar axis.
    pub fn from_cartesian(p: &Vec3) -> Result<Self> {
        let r = p.norm();
        if r == 0.0 || !r.is_finite() {
            return Err(Error::Domain(format!(
                "cannot take spherical coordinates of ({}, {}, {})",
                p.x, p.y, p.z
            )));
        }
        let phi = (p.y / r).clamp(-1.0, 1.0).asin();
        let theta = if p.x == 0.0 && p.z == 0.0 {
            0.0
        } else {
            normalize_longitude(p.x.atan2(p.z))
        };
        Ok(Self { theta, phi, r })
    }
}

/// Rigid camera-to-world transform `p_world = R p_camera + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Validates orthonormality and a positive determinant to
    /// [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !rotation
            .iter()
            .chain(translation.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidPose("non-finite entries".into()));
        }
        let ortho = (rotation * rotation.transpose() - Mat3::identity())
            .abs()
            .max();
        if ortho > ROTATION_TOLERANCE {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max |R R^T - I| = {ortho:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidPose(format!("rotation determinant is {det}")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: t,
        }
    }

    /// Rotation about `axis` (need not be normalized) by `angle` radians.
    pub fn from_axis_angle(axis: &Vec3, angle: f64, t: Vec3) -> Self {
        let axis = nalgebra::Unit::new_normalize(*axis);
        let rotation = *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix();
        Self {
            rotation,
            translation: t,
        }
    }

    /// Parses a row-major 4x4 camera-to-world matrix. The last row must be `0 0 0 1`.
    pub fn from_row_major(m: &[f64; 16]) -> Result<Self> {
        let last = [m[12], m[13], m[14], m[15]];
        if last != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidPose(format!(
                "last row must be [0, 0, 0, 1], got {last:?}"
            )));
        }
        let rotation = Mat3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        Self::new(rotation, Vec3::new(m[3], m[7], m[11]))
    }

    #[rustfmt::skip]
    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        Matrix4::from_row_slice(&self.to_row_major())
    }

    #[inline]
    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Transform taking camera-`src` coordinates to camera-`dst` coordinates,
    /// `dst⁻¹ ∘ src` for camera-to-world poses.
    pub fn relative(src: &Pose, dst: &Pose) -> Pose {
        dst.inverse().compose(src)
    }
}
