//! Forward Gaussian splatting.
//!
//! Splats are projected through a pinhole camera with the local affine
//! (Jacobian) approximation of the perspective map, sorted front to back by
//! view-space depth, binned into 16x16 tiles and alpha-blended per pixel.
//! [`rasterize_reference`] evaluates the same per-pixel blend without tiling
//! and serves as the oracle for [`rasterize`].
//!
//! Blending constants: a 0.3 px² dilation on the projected covariance, a 0.999
//! cap on per-splat alpha, a 3-sigma cutoff (Mahalanobis² ≤ 9), early
//! termination once transmittance drops below 1e-4, and a 0.05 m near plane.
//!
//! Panoramas are rendered as six padded 90° faces and stitched with
//! [`cubemap_to_erp`].

use core::cmp::Ordering;

use nalgebra::{Matrix2x3, Matrix3};

use crate::cubemap::{cubemap_to_erp, CubeMap, Face};
use crate::gaussians::{Splat, SplatSet};
use crate::geom::{ErpGrid, Mat3, Pose, Vec3};
use crate::image::{DepthMap, ErpImage};
use crate::prelude::*;
use crate::{Error, Result};

pub const TILE_SIZE: usize = 16;
pub const NEAR_CLIP: f64 = 0.05;
pub const COV_DILATION: f64 = 0.3;
pub const MAX_ALPHA: f64 = 0.999;
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Squared Mahalanobis radius beyond which a splat does not touch a pixel.
pub const CUTOFF_MAHALANOBIS_SQ: f64 = 9.0;
/// Extra field of view around each panorama face, as a fraction of the face.
pub const FACE_MARGIN: f64 = 0.12;
/// The projection Jacobian is evaluated with `x/z`, `y/z` clamped to this
/// multiple of the frustum half-extent.
pub const JACOBIAN_CLAMP: f64 = 1.3;

/// Pinhole camera with x right, y down, z forward in camera space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera-to-world.
    pub pose: Pose,
}

impl PinholeCamera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        pose: Pose,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive: {fx}, {fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image size must be non-zero".into()));
        }
        if !(0.0..=width as f64).contains(&cx) || !(0.0..=height as f64).contains(&cy) {
            return Err(Error::InvalidArgument(format!(
                "principal point ({cx}, {cy}) outside the {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        })
    }

    /// Square camera with horizontal field of view `fov_rad`.
    pub fn square(size: usize, fov_rad: f64, pose: Pose) -> Result<Self> {
        if !(fov_rad > 0.0 && fov_rad < core::f64::consts::PI) {
            return Err(Error::InvalidArgument(format!(
                "field of view {fov_rad} rad out of range"
            )));
        }
        let c = size as f64 / 2.0;
        let f = c / (fov_rad / 2.0).tan();
        Self::new(f, f, c, c, size, size, pose)
    }

    /// Upright square view looking along the forward (+z) axis of a panorama
    /// pose, with image up along the panorama's +y.
    pub fn looking_forward(pano_pose: &Pose, size: usize, fov_rad: f64) -> Result<Self> {
        let pose = pano_pose.compose(&face_pose(Face::Front));
        Self::square(size, fov_rad, pose)
    }
}

fn face_pose(face: Face) -> Pose {
    Pose::new(face.rotation(), Vec3::zeros()).expect("face bases are rotations")
}

/// A splat after projection to the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected2DGaussian {
    pub mean: [f64; 2],
    /// Symmetric 2x2 covariance `[xx, xy, yy]` in px², dilation included.
    pub cov: [f64; 3],
    /// Inverse covariance `[xx, xy, yy]`.
    pub conic: [f64; 3],
    pub view_z: f64,
    pub opacity: f64,
    pub color: [f64; 3],
}

impl Projected2DGaussian {
    /// Inclusive pixel index range `(x0, x1, y0, y1)` whose centers may lie
    /// within the 3-sigma ellipse.
    fn pixel_bounds(&self) -> (f64, f64, f64, f64) {
        let ex = 3.0 * self.cov[0].sqrt();
        let ey = 3.0 * self.cov[2].sqrt();
        (
            (self.mean[0] - ex - 0.5).floor() - 1.0,
            (self.mean[0] + ex - 0.5).ceil() + 1.0,
            (self.mean[1] - ey - 0.5).floor() - 1.0,
            (self.mean[1] + ey - 0.5).ceil() + 1.0,
        )
    }

    /// Squared Mahalanobis distance of a pixel position from the mean.
    #[inline]
    pub fn mahalanobis_sq(&self, px: f64, py: f64) -> f64 {
        let dx = px - self.mean[0];
        let dy = py - self.mean[1];
        self.conic[0] * dx * dx + 2.0 * self.conic[1] * dx * dy + self.conic[2] * dy * dy
    }
}

/// Projects a splat; `None` when its center is within the near plane.
pub fn project_gaussian(splat: &Splat, cam: &PinholeCamera) -> Option<Projected2DGaussian> {
    let world_to_cam = cam.pose.inverse();
    project_with(splat, cam, &world_to_cam)
}

fn project_with(
    splat: &Splat,
    cam: &PinholeCamera,
    world_to_cam: &Pose,
) -> Option<Projected2DGaussian> {
    let t = world_to_cam.transform_point(&splat.center());
    if t.z.is_nan() || t.z <= NEAR_CLIP {
        return None;
    }
    let (fx, fy) = (cam.fx, cam.fy);
    let iz = 1.0 / t.z;
    let mean = [fx * t.x * iz + cam.cx, fy * t.y * iz + cam.cy];
    let lim_x = JACOBIAN_CLAMP * cam.cx.max(cam.width as f64 - cam.cx) / fx;
    let lim_y = JACOBIAN_CLAMP * cam.cy.max(cam.height as f64 - cam.cy) / fy;
    let tan_x = (t.x * iz).clamp(-lim_x, lim_x);
    let tan_y = (t.y * iz).clamp(-lim_y, lim_y);
    let j = Matrix2x3::new(
        fx * iz,
        0.0,
        -fx * tan_x * iz,
        0.0,
        fy * iz,
        -fy * tan_y * iz,
    );
    let rv: &Mat3 = world_to_cam.rotation();
    let sigma_view: Matrix3<f64> = rv * splat.covariance() * rv.transpose();
    let c = j * sigma_view * j.transpose();
    let cov = [
        c[(0, 0)] + COV_DILATION,
        0.5 * (c[(0, 1)] + c[(1, 0)]),
        c[(1, 1)] + COV_DILATION,
    ];
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    if !det.is_finite() || det <= 0.0 {
        return None;
    }
    let conic = [cov[2] / det, -cov[1] / det, cov[0] / det];
    Some(Projected2DGaussian {
        mean,
        cov,
        conic,
        view_z: t.z,
        opacity: splat.opacity,
        color: splat.color,
    })
}

/// Color, coverage and expected depth of a rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, composited over the background.
    pub color: Vec<f64>,
    /// Accumulated opacity `1 - T_final`.
    pub alpha: Vec<f64>,
    /// Blend-weighted view-space z, normalized by alpha; 0 where alpha is 0.
    pub depth: Vec<f64>,
}

impl RenderOutput {
    fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            color: vec![0.0; width * height * 3],
            alpha: vec![0.0; width * height],
            depth: vec![0.0; width * height],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct PixelResult {
    color: [f64; 3],
    alpha: f64,
    depth: f64,
}

/// Front-to-back blend of `gaussians` (already sorted) at pixel center `(px, py)`.
#[inline]
fn composite<'a, I>(px: f64, py: f64, gaussians: I, background: &[f64; 3]) -> PixelResult
where
    I: IntoIterator<Item = &'a Projected2DGaussian>,
{
    let mut transmittance = 1.0;
    let mut color = [0.0; 3];
    let mut depth = 0.0;
    for g in gaussians {
        let power = g.mahalanobis_sq(px, py);
        if power > CUTOFF_MAHALANOBIS_SQ {
            continue;
        }
        let a = (g.opacity * (-0.5 * power).exp()).min(MAX_ALPHA);
        let w = transmittance * a;
        for (acc, c) in color.iter_mut().zip(g.color) {
            *acc += w * c;
        }
        depth += w * g.view_z;
        transmittance *= 1.0 - a;
        if transmittance < MIN_TRANSMITTANCE {
            break;
        }
    }
    let alpha = 1.0 - transmittance;
    for c in 0..3 {
        color[c] += transmittance * background[c];
    }
    PixelResult {
        color,
        alpha,
        depth: if alpha > 0.0 { depth / alpha } else { 0.0 },
    }
}

/// Projects every splat and returns the survivors in blend order
/// (view z ascending, input index breaking ties).
fn project_and_sort(splats: &SplatSet, cam: &PinholeCamera) -> Vec<Projected2DGaussian> {
    let world_to_cam = cam.pose.inverse();
    let projected: Vec<Option<Projected2DGaussian>> = crate::par::map_range(splats.len(), |i| {
        project_with(&splats.splats()[i], cam, &world_to_cam)
    });
    let mut indexed: Vec<(usize, Projected2DGaussian)> = projected
        .into_iter()
        .enumerate()
        .filter_map(|(i, g)| g.map(|g| (i, g)))
        .collect();
    indexed.sort_by(|a, b| match a.1.view_z.total_cmp(&b.1.view_z) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    indexed.into_iter().map(|(_, g)| g).collect()
}

/// Tile-binned rasterization.
pub fn rasterize(splats: &SplatSet, cam: &PinholeCamera, background: [f64; 3]) -> RenderOutput {
    let (w, h) = (cam.width, cam.height);
    let sorted = project_and_sort(splats, cam);
    let tiles_x = w.div_ceil(TILE_SIZE);
    let tiles_y = h.div_ceil(TILE_SIZE);

    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (i, g) in sorted.iter().enumerate() {
        let (x0, x1, y0, y1) = g.pixel_bounds();
        if x1 < 0.0 || y1 < 0.0 || x0 >= w as f64 || y0 >= h as f64 {
            continue;
        }
        let tx0 = (x0.max(0.0) as usize) / TILE_SIZE;
        let tx1 = (x1.min((w - 1) as f64) as usize) / TILE_SIZE;
        let ty0 = (y0.max(0.0) as usize) / TILE_SIZE;
        let ty1 = (y1.min((h - 1) as f64) as usize) / TILE_SIZE;
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                bins[ty * tiles_x + tx].push(i as u32);
            }
        }
    }

    let tiles: Vec<Vec<PixelResult>> = crate::par::map_range(tiles_x * tiles_y, |t| {
        let (tx, ty) = (t % tiles_x, t / tiles_x);
        let list: Vec<&Projected2DGaussian> =
            bins[t].iter().map(|&i| &sorted[i as usize]).collect();
        let xs = tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(w);
        let ys = ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(h);
        let mut out = Vec::with_capacity(xs.len() * ys.len());
        for y in ys {
            for x in xs.clone() {
                out.push(composite(
                    x as f64 + 0.5,
                    y as f64 + 0.5,
                    list.iter().copied(),
                    &background,
                ));
            }
        }
        out
    });

    let mut img = RenderOutput::blank(w, h);
    for (t, results) in tiles.into_iter().enumerate() {
        let (tx, ty) = (t % tiles_x, t / tiles_x);
        let x0 = tx * TILE_SIZE;
        let tw = (x0 + TILE_SIZE).min(w) - x0;
        for (k, r) in results.into_iter().enumerate() {
            let (x, y) = (x0 + k % tw, ty * TILE_SIZE + k / tw);
            let p = y * w + x;
            img.color[p * 3..p * 3 + 3].copy_from_slice(&r.color);
            img.alpha[p] = r.alpha;
            img.depth[p] = r.depth;
        }
    }
    img
}

/// Exhaustive per-pixel loop over all sorted splats; no tiling.
pub fn rasterize_reference(
    splats: &SplatSet,
    cam: &PinholeCamera,
    background: [f64; 3],
) -> RenderOutput {
    let sorted = project_and_sort(splats, cam);
    let mut img = RenderOutput::blank(cam.width, cam.height);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let r = composite(x as f64 + 0.5, y as f64 + 0.5, sorted.iter(), &background);
            let p = y * cam.width + x;
            img.color[p * 3..p * 3 + 3].copy_from_slice(&r.color);
            img.alpha[p] = r.alpha;
            img.depth[p] = r.depth;
        }
    }
    img
}

/// Rendered panorama with radial depth and coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoramaRender {
    pub image: ErpImage,
    pub depth: DepthMap,
    pub alpha: Vec<f64>,
}

/// Inner face size and per-side padding used for a panorama of `grid`.
pub fn panorama_face_layout(grid: ErpGrid) -> (usize, usize) {
    let inner = (grid.width() / 4).max(2);
    let pad = (0.5 * FACE_MARGIN * inner as f64).ceil() as usize;
    (inner, pad)
}

/// Renders six padded 90° faces at `pose`, crops the margins and stitches them
/// onto `grid`. Face z-depth is converted to radial depth before stitching.
pub fn render_panorama(
    splats: &SplatSet,
    pose: &Pose,
    grid: ErpGrid,
    background: [f64; 3],
) -> PanoramaRender {
    let (inner, pad) = panorama_face_layout(grid);
    let padded = inner + 2 * pad;
    let focal = inner as f64 / 2.0;
    let center = padded as f64 / 2.0;
    const CH: usize = 5; // rgb, radial depth, alpha

    let faces: Vec<Vec<f64>> = Face::ALL
        .iter()
        .map(|&face| {
            let cam = PinholeCamera {
                fx: focal,
                fy: focal,
                cx: center,
                cy: center,
                width: padded,
                height: padded,
                pose: pose.compose(&face_pose(face)),
            };
            let out = rasterize(splats, &cam, background);
            let mut data = vec![0.0; inner * inner * CH];
            for y in 0..inner {
                for x in 0..inner {
                    let p = (y + pad) * padded + (x + pad);
                    let a = (x as f64 + 0.5 - inner as f64 / 2.0) / focal;
                    let b = (y as f64 + 0.5 - inner as f64 / 2.0) / focal;
                    let o = (y * inner + x) * CH;
                    data[o..o + 3].copy_from_slice(&out.color[p * 3..p * 3 + 3]);
                    data[o + 3] = out.depth[p] * (1.0 + a * a + b * b).sqrt();
                    data[o + 4] = out.alpha[p];
                }
            }
            data
        })
        .collect();
    let cm = CubeMap::new(inner, CH, faces).expect("face layout is consistent");
    let stitched = cubemap_to_erp(&cm, grid).into_data();

    let mut rgb = Vec::with_capacity(grid.len() * 3);
    let mut depth = Vec::with_capacity(grid.len());
    let mut alpha = Vec::with_capacity(grid.len());
    for px in stitched.chunks_exact(CH) {
        rgb.extend_from_slice(&px[..3]);
        depth.push(px[3].max(0.0));
        alpha.push(px[4].clamp(0.0, 1.0));
    }
    PanoramaRender {
        image: ErpImage::new(grid, 3, rgb).expect("finite render"),
        depth: DepthMap::new(grid, depth).expect("finite render"),
        alpha,
    }
}
