//! Analytic test scenes: a textured axis-aligned room with optional spheres,
//! ray traced exactly along the ERP pixel rays.

use core::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::{ErpGrid, Pose, SphericalCoord, Vec3};
use crate::image::{DepthMap, ErpImage};
use crate::prelude::*;
use crate::{Error, Result};

/// Cameras must stay at least this far from every surface.
pub const CAMERA_CLEARANCE: f64 = 0.05;
const MAX_PLACEMENT_ATTEMPTS: usize = 256;

/// Procedural surface texture, evaluated on 2D surface coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    Checkerboard {
        period: f64,
        dark: [f64; 3],
        light: [f64; 3],
    },
    /// Sum of three oriented sinusoids at incommensurate frequencies
    /// `f, 1.618 f, 2.414 f`, modulating `tint`.
    SineGrating {
        frequency: f64,
        tint: [f64; 3],
    },
    Constant {
        color: [f64; 3],
    },
}

impl Texture {
    pub fn checkerboard(period: f64) -> Self {
        Texture::Checkerboard {
            period,
            dark: [0.15, 0.15, 0.15],
            light: [0.85, 0.85, 0.85],
        }
    }

    pub fn is_textured(&self) -> bool {
        !matches!(self, Texture::Constant { .. })
    }

    pub fn eval(&self, a: f64, b: f64) -> [f64; 3] {
        match *self {
            Texture::Checkerboard {
                period,
                dark,
                light,
            } => {
                let k = (a / period).floor() as i64 + (b / period).floor() as i64;
                if k.rem_euclid(2) == 0 {
                    dark
                } else {
                    light
                }
            }
            Texture::SineGrating { frequency, tint } => {
                const RATIOS: [f64; 3] = [1.0, 1.618, 2.414];
                const ANGLES: [f64; 3] = [0.3, 1.4, 2.5];
                const PHASES: [f64; 3] = [0.0, 1.1, 2.3];
                let mut s = 0.0;
                for k in 0..3 {
                    let (sa, ca) = ANGLES[k].sin_cos();
                    s += (TAU * frequency * RATIOS[k] * (a * ca + b * sa) + PHASES[k]).sin();
                }
                let v = 0.5 + 0.4 * s / 3.0;
                tint.map(|t| t * v)
            }
            Texture::Constant { color } => color,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
    pub texture: Texture,
}

/// Axis-aligned box room plus optional spheres. Wall textures are ordered
/// `+x, -x, +y, -y, +z, -z` (the wall at the maximum/minimum of each axis).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub room_min: Vec3,
    pub room_max: Vec3,
    pub walls: [Texture; 6],
    pub spheres: Vec<Sphere>,
    /// Default position of the first camera.
    pub origin: Vec3,
}

/// Exact render of a scene from one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub image: ErpImage,
    pub depth: DepthMap,
    /// Pixels whose surface carries a non-constant texture.
    pub textured: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Hit {
    distance: f64,
    point: Vec3,
    color: [f64; 3],
    textured: bool,
}

impl SyntheticScene {
    /// 4 x 3 x 4 m room, every wall covered by a differently tinted grating.
    pub fn textured_room() -> Self {
        let tints = [
            [1.0, 0.75, 0.6],
            [0.6, 0.9, 1.0],
            [0.95, 0.95, 0.8],
            [0.75, 0.65, 0.55],
            [0.8, 1.0, 0.7],
            [1.0, 0.7, 0.9],
        ];
        Self {
            room_min: Vec3::new(-2.0, -1.5, -2.0),
            room_max: Vec3::new(2.0, 1.5, 2.0),
            walls: tints.map(|tint| Texture::SineGrating {
                frequency: 1.3,
                tint,
            }),
            spheres: Vec::new(),
            origin: Vec3::new(0.1, 0.05, -0.15),
        }
    }

    /// Same room with 0.25 m checkerboards on every wall.
    pub fn checker_room() -> Self {
        Self {
            walls: [Texture::checkerboard(0.25); 6],
            ..Self::textured_room()
        }
    }

    /// Textured room with two spheres standing in the volume.
    pub fn room_with_spheres() -> Self {
        let mut s = Self::textured_room();
        s.spheres = vec![
            Sphere {
                center: Vec3::new(1.0, -0.8, 1.1),
                radius: 0.45,
                texture: Texture::SineGrating {
                    frequency: 3.0,
                    tint: [0.9, 0.4, 0.3],
                },
            },
            Sphere {
                center: Vec3::new(-1.1, 0.4, -0.9),
                radius: 0.35,
                texture: Texture::checkerboard(0.15),
            },
        ];
        s
    }

    /// Constant-colored walls (no texture anywhere).
    pub fn plain_room(color: [f64; 3]) -> Self {
        Self {
            walls: [Texture::Constant { color }; 6],
            ..Self::textured_room()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "room" | "textured" => Some(Self::textured_room()),
            "checker" => Some(Self::checker_room()),
            "spheres" => Some(Self::room_with_spheres()),
            "plain" => Some(Self::plain_room([0.5, 0.5, 0.5])),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 4] = ["room", "checker", "spheres", "plain"];

    /// Whether `p` is inside the room with clearance and outside all spheres.
    pub fn is_valid_camera(&self, p: &Vec3) -> bool {
        let inside = (0..3).all(|k| {
            p[k] > self.room_min[k] + CAMERA_CLEARANCE && p[k] < self.room_max[k] - CAMERA_CLEARANCE
        });
        inside
            && self
                .spheres
                .iter()
                .all(|s| (p - s.center).norm() > s.radius + CAMERA_CLEARANCE)
    }

    fn trace(&self, origin: &Vec3, dir: &Vec3) -> Hit {
        let mut best_t = f64::INFINITY;
        let mut wall = 0;
        for k in 0..3 {
            let d = dir[k];
            if d > 0.0 {
                let t = (self.room_max[k] - origin[k]) / d;
                if t < best_t {
                    best_t = t;
                    wall = 2 * k;
                }
            } else if d < 0.0 {
                let t = (self.room_min[k] - origin[k]) / d;
                if t < best_t {
                    best_t = t;
                    wall = 2 * k + 1;
                }
            }
        }
        let point = origin + dir * best_t;
        // in-plane coordinates: the two other axes
        let axis = wall / 2;
        let (ia, ib) = match axis {
            0 => (2, 1),
            1 => (0, 2),
            _ => (0, 1),
        };
        let tex = &self.walls[wall];
        let mut hit = Hit {
            distance: best_t,
            point,
            color: tex.eval(point[ia], point[ib]),
            textured: tex.is_textured(),
        };
        for s in &self.spheres {
            let oc = origin - s.center;
            let b = oc.dot(dir);
            let c = oc.norm_squared() - s.radius * s.radius;
            let disc = b * b - c;
            if disc < 0.0 {
                continue;
            }
            let t = -b - disc.sqrt();
            if t > 0.0 && t < hit.distance {
                let p = origin + dir * t;
                let local = SphericalCoord::from_cartesian(&(p - s.center))
                    .expect("hit point is on the sphere surface");
                hit = Hit {
                    distance: t,
                    point: p,
                    color: s.texture.eval(local.theta * s.radius, local.phi * s.radius),
                    textured: s.texture.is_textured(),
                };
            }
        }
        hit
    }

    /// Color, exact radial depth and texture mask along every pixel ray.
    pub fn render_gt(&self, pose: &Pose, grid: ErpGrid) -> Result<GroundTruth> {
        let origin = *pose.translation();
        if !self.is_valid_camera(&origin) {
            return Err(Error::InvalidScene(format!(
                "camera at ({}, {}, {}) is not inside the room and clear of all spheres",
                origin.x, origin.y, origin.z
            )));
        }
        let hits: Vec<Hit> = crate::par::map_range(grid.len(), |i| {
            let (x, y) = (i % grid.width(), i / grid.width());
            let dir = pose.transform_vector(&grid.pixel_direction(x, y));
            self.trace(&origin, &dir)
        });
        let image = ErpImage::new(grid, 3, hits.iter().flat_map(|h| h.color).collect())?;
        let depth = DepthMap::new(grid, hits.iter().map(|h| h.distance).collect())?;
        Ok(GroundTruth {
            image,
            depth,
            textured: hits.iter().map(|h| h.textured).collect(),
        })
    }

    /// Surface point hit by the ray from `origin` along unit `dir`.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> (f64, Vec3) {
        let h = self.trace(origin, dir);
        (h.distance, h.point)
    }

    /// Random unit direction along which a camera at `from` can move `distance`
    /// while staying valid.
    fn valid_direction(&self, from: &Vec3, distance: f64, rng: &mut ChaCha8Rng) -> Result<Vec3> {
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
            let a: f64 = TAU * rng.random::<f64>();
            let rxy = (1.0 - z * z).max(0.0).sqrt();
            let dir = Vec3::new(rxy * a.cos(), z, rxy * a.sin());
            let steps = 8;
            let ok = (0..=steps).all(|k| {
                self.is_valid_camera(&(from + dir * (distance * k as f64 / steps as f64)))
            });
            if ok {
                return Ok(dir);
            }
        }
        Err(Error::InvalidScene(format!(
            "no valid direction for a {distance} m move after {MAX_PLACEMENT_ATTEMPTS} attempts"
        )))
    }

    /// `n` identity-rotation poses on a straight segment of length `baseline`
    /// starting at the scene origin, in a seeded random valid direction.
    pub fn trajectory(&self, n: usize, baseline: f64, seed: u64) -> Result<Vec<Pose>> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "trajectory needs at least one frame".into(),
            ));
        }
        if !self.is_valid_camera(&self.origin) {
            return Err(Error::InvalidScene(
                "scene origin is not a valid camera position".into(),
            ));
        }
        if baseline == 0.0 || n == 1 {
            return Ok(vec![Pose::from_translation(self.origin); n]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dir = self.valid_direction(&self.origin, baseline, &mut rng)?;
        Ok((0..n)
            .map(|k| {
                let s = baseline * k as f64 / (n - 1) as f64;
                Pose::from_translation(self.origin + dir * s)
            })
            .collect())
    }

    /// Two views `baseline` meters apart with exact ground truth.
    pub fn make_test_pair(&self, grid: ErpGrid, baseline: f64, seed: u64) -> Result<TestPair> {
        let poses = self.trajectory(2, baseline, seed)?;
        let views = [
            self.render_gt(&poses[0], grid)?,
            self.render_gt(&poses[1], grid)?,
        ];
        Ok(TestPair {
            poses: [poses[0], poses[1]],
            views,
        })
    }
}

/// Two posed synthetic views.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPair {
    pub poses: [Pose; 2],
    pub views: [GroundTruth; 2],
}
