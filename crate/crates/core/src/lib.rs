//! Geometric core for panoramic novel-view synthesis.
//!
//! Everything here is pure computation over in-memory rasters: equirectangular
//! (ERP) coordinate maps and rigid poses, panoramic images and cubemaps,
//! hand-crafted matching features, the spherical-sweep cost volume with softmax
//! depth, pixel-aligned Gaussian decoding, and a tile-based Gaussian splatting
//! rasterizer. File formats, the scene loader and the CLI live in the `panosplat`
//! crate.
//!
//! The crate is `no_std` + `alloc` when built with `default-features = false`.
//! The `parallel` feature (on by default) fans per-pixel and per-tile work out
//! over rayon; results are bit-identical regardless of the worker count.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
mod par;
mod prelude;

pub mod cubemap;
pub mod features;
pub mod gaussians;
pub mod geom;
pub mod image;
pub mod metrics;
pub mod renderer;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};
pub use geom::{ErpGrid, Pose, SphericalCoord};
pub use image::{DepthMap, ErpImage};
