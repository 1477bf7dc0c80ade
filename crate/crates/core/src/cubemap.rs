//! Six-face cubemap projection and ERP stitching.
//!
//! Each face is a 90° pinhole view with image x to the right, image y down and
//! the face axis forward (the same camera convention as
//! [`renderer::PinholeCamera`](crate::renderer::PinholeCamera)). Face order and
//! axes are fixed: front(+z), right(+x), back(-z), left(-x), up(+y), down(-y).
//! Side faces keep +y up; the up face has its bottom edge towards +z and the
//! down face its top edge towards +z.

use crate::geom::{ErpGrid, Mat3, SphericalCoord, Vec3};
use crate::image::ErpImage;
use crate::prelude::*;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    Front,
    Right,
    Back,
    Left,
    Up,
    Down,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::Front,
        Face::Right,
        Face::Back,
        Face::Left,
        Face::Up,
        Face::Down,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    /// `(right, down, forward)` unit axes of the face in the panorama frame.
    pub fn basis(self) -> (Vec3, Vec3, Vec3) {
        let v = Vec3::new;
        match self {
            Face::Front => (v(-1.0, 0.0, 0.0), v(0.0, -1.0, 0.0), v(0.0, 0.0, 1.0)),
            Face::Right => (v(0.0, 0.0, 1.0), v(0.0, -1.0, 0.0), v(1.0, 0.0, 0.0)),
            Face::Back => (v(1.0, 0.0, 0.0), v(0.0, -1.0, 0.0), v(0.0, 0.0, -1.0)),
            Face::Left => (v(0.0, 0.0, -1.0), v(0.0, -1.0, 0.0), v(-1.0, 0.0, 0.0)),
            Face::Up => (v(-1.0, 0.0, 0.0), v(0.0, 0.0, 1.0), v(0.0, 1.0, 0.0)),
            Face::Down => (v(-1.0, 0.0, 0.0), v(0.0, 0.0, -1.0), v(0.0, -1.0, 0.0)),
        }
    }

    /// Camera-to-panorama rotation whose columns are the face's
    /// `(right, down, forward)` axes.
    pub fn rotation(self) -> Mat3 {
        let (r, d, f) = self.basis();
        Mat3::from_columns(&[r, d, f])
    }

    /// Face hit by direction `d`: the axis with the largest absolute component.
    pub fn for_direction(d: &Vec3) -> Face {
        let (ax, ay, az) = (d.x.abs(), d.y.abs(), d.z.abs());
        if az >= ax && az >= ay {
            if d.z >= 0.0 {
                Face::Front
            } else {
                Face::Back
            }
        } else if ax >= ay {
            if d.x >= 0.0 {
                Face::Right
            } else {
                Face::Left
            }
        } else if d.y >= 0.0 {
            Face::Up
        } else {
            Face::Down
        }
    }
}

/// Six square perspective rasters with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeMap {
    face_size: usize,
    channels: usize,
    faces: Vec<Vec<f64>>,
}

impl CubeMap {
    pub fn new(face_size: usize, channels: usize, faces: Vec<Vec<f64>>) -> Result<Self> {
        if face_size < 2 {
            return Err(Error::InvalidArgument(format!("face size {face_size} < 2")));
        }
        if channels == 0 {
            return Err(Error::InvalidArgument(
                "cubemap needs at least one channel".into(),
            ));
        }
        if faces.len() != 6 {
            return Err(Error::ShapeMismatch(format!(
                "{} faces, expected 6",
                faces.len()
            )));
        }
        let n = face_size * face_size * channels;
        if let Some(i) = faces.iter().position(|f| f.len() != n) {
            return Err(Error::ShapeMismatch(format!(
                "face {i} has {} values, expected {n}",
                faces[i].len()
            )));
        }
        Ok(Self {
            face_size,
            channels,
            faces,
        })
    }

    #[inline]
    pub fn face_size(&self) -> usize {
        self.face_size
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn face(&self, face: Face) -> &[f64] {
        &self.faces[face.index()]
    }

    pub fn faces(&self) -> &[Vec<f64>] {
        &self.faces
    }

    #[inline]
    pub fn pixel(&self, face: Face, x: usize, y: usize) -> &[f64] {
        let i = (y * self.face_size + x) * self.channels;
        &self.faces[face.index()][i..i + self.channels]
    }

    /// Samples along direction `d` from the face selected by
    /// [`Face::for_direction`], bilinear within the face, clamped at its edges.
    pub fn sample_direction(&self, d: &Vec3, out: &mut [f64]) {
        let face = Face::for_direction(d);
        let (right, down, fwd) = face.basis();
        let depth = d.dot(&fwd);
        let a = d.dot(&right) / depth;
        let b = d.dot(&down) / depth;
        let n = self.face_size as f64;
        let i = (a + 1.0) * 0.5 * n;
        let j = (b + 1.0) * 0.5 * n;
        sample_clamped(
            &self.faces[face.index()],
            self.face_size,
            self.face_size,
            self.channels,
            i,
            j,
            out,
        );
    }
}

/// Direction through the center of face pixel `(x, y)` (not normalized).
#[inline]
pub fn face_pixel_direction(face: Face, face_size: usize, x: usize, y: usize) -> Vec3 {
    let (right, down, fwd) = face.basis();
    let n = face_size as f64;
    let a = 2.0 * (x as f64 + 0.5) / n - 1.0;
    let b = 2.0 * (y as f64 + 0.5) / n - 1.0;
    fwd + right * a + down * b
}

/// Bilinear lookup with edge clamping; pixel `k` sits at `k + 0.5`.
#[inline]
pub(crate) fn sample_clamped(
    data: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    u: f64,
    v: f64,
    out: &mut [f64],
) {
    let x = (u - 0.5).clamp(0.0, (width - 1) as f64);
    let y = (v - 0.5).clamp(0.0, (height - 1) as f64);
    let x0 = (x.floor() as usize).min(width - 1);
    let y0 = (y.floor() as usize).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let x1 = (x0 + 1).min(width - 1);
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

/// Renders the sphere into six 90° faces by bilinear ERP lookups.
pub fn erp_to_cubemap(img: &ErpImage, face_size: usize) -> Result<CubeMap> {
    if face_size < 2 {
        return Err(Error::InvalidArgument(format!("face size {face_size} < 2")));
    }
    let ch = img.channels();
    let grid = img.grid();
    let faces = Face::ALL
        .iter()
        .map(|&face| {
            let mut data = vec![0.0; face_size * face_size * ch];
            crate::par::for_each_chunk(&mut data, face_size * ch, |y, row| {
                for (x, px) in row.chunks_exact_mut(ch).enumerate() {
                    let d = face_pixel_direction(face, face_size, x, y);
                    let (u, v) = grid.project(&d);
                    img.sample_into(u, v, px);
                }
            });
            data
        })
        .collect();
    CubeMap::new(face_size, ch, faces)
}

/// Stitches a cubemap back into an ERP raster, one face per direction.
pub fn cubemap_to_erp(cm: &CubeMap, grid: ErpGrid) -> ErpImage {
    ErpImage::from_fn(grid, cm.channels(), |x, y, px| {
        let d = grid.pixel_direction(x, y);
        cm.sample_direction(&d, px);
    })
}

/// Spherical coordinate of a face pixel center, for callers that need angles.
pub fn face_pixel_spherical(face: Face, face_size: usize, x: usize, y: usize) -> SphericalCoord {
    let d = face_pixel_direction(face, face_size, x, y);
    SphericalCoord::from_cartesian(&d).expect("face directions are never zero")
}
