//! On-disk formats: 8-bit PNG panoramas, `SDPT` depth rasters and `SPLT`
//! splat files. Both binary formats are little-endian and store `f32`.

use std::fs;
use std::path::Path;

use panosplat_core::gaussians::{Splat, SplatSet};
use panosplat_core::sweep::DepthResult;
use panosplat_core::{DepthMap, ErpGrid, ErpImage};

use crate::{Error, Result};

const DEPTH_MAGIC: &[u8; 4] = b"SDPT";
const SPLAT_MAGIC: &[u8; 4] = b"SPLT";
const SPLAT_FLOATS: usize = 14;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn f32s(bytes: &[u8]) -> impl Iterator<Item = f32> + '_ {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
}

fn to_u8(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// RGB bytes of an image with values in `[0, 1]` (gray images are replicated).
pub fn image_to_rgb8(img: &ErpImage) -> Vec<u8> {
    let ch = img.channels();
    img.data()
        .chunks_exact(ch)
        .flat_map(|px| {
            let rgb = if ch >= 3 {
                [px[0], px[1], px[2]]
            } else {
                [px[0]; 3]
            };
            rgb.map(to_u8)
        })
        .collect()
}

pub fn encode_png(width: usize, height: usize, rgb: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    image::write_buffer_with_format(
        &mut std::io::Cursor::new(&mut out),
        rgb,
        width as u32,
        height as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )
    .map_err(|source| Error::Image {
        path: "<memory>".into(),
        source,
    })?;
    Ok(out)
}

pub fn write_png(path: &Path, img: &ErpImage) -> Result<()> {
    write_rgb8_png(path, img.width(), img.height(), &image_to_rgb8(img))
}

pub fn write_rgb8_png(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    write_bytes(path, &encode_png(width, height, rgb)?)
}

/// Loads a PNG as a 3-channel panorama; the size must be a valid ERP grid.
pub fn read_png(path: &Path) -> Result<ErpImage> {
    let img = image::open(path)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?
        .into_rgb8();
    let grid = ErpGrid::new(img.width() as usize, img.height() as usize)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let data = img
        .into_raw()
        .into_iter()
        .map(|b| b as f64 / 255.0)
        .collect();
    Ok(ErpImage::new(grid, 3, data)?)
}

pub fn encode_depth(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + values.len() * 4);
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Width, height and row-major values of an `SDPT` raster.
pub fn decode_depth(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < 12 || &bytes[..4] != DEPTH_MAGIC {
        return Err(Error::format(path, "not an SDPT depth file"));
    }
    let (w, h) = (u32_at(bytes, 4) as usize, u32_at(bytes, 8) as usize);
    let expect = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(12));
    if expect != Some(bytes.len()) {
        return Err(Error::format(
            path,
            format!(
                "{w}x{h} depth needs {} bytes, file has {}",
                12 + 4 * w * h,
                bytes.len()
            ),
        ));
    }
    Ok((w, h, f32s(&bytes[12..]).map(f64::from).collect()))
}

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let g = depth.grid();
    write_bytes(path, &encode_depth(g.width(), g.height(), depth.data()))
}

/// Loads an `SDPT` raster on an ERP grid. Non-finite or negative entries are
/// mapped to 0 (invalid).
pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let (w, h, values) = decode_depth(path, &read_bytes(path)?)?;
    let grid = ErpGrid::new(w, h).map_err(|e| Error::format(path, e.to_string()))?;
    let values = values
        .into_iter()
        .map(|v| if v.is_finite() && v > 0.0 { v } else { 0.0 })
        .collect();
    Ok(DepthMap::new(grid, values)?)
}

/// Sibling path holding the confidence raster of a depth file:
/// `view.sdpt` -> `view.confidence.sdpt`.
pub fn confidence_path(depth_path: &Path) -> std::path::PathBuf {
    let stem = depth_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    depth_path.with_file_name(format!("{stem}.confidence.sdpt"))
}

/// Writes depth to `path` and confidence to [`confidence_path`].
pub fn write_depth_result(path: &Path, result: &DepthResult) -> Result<()> {
    write_depth(path, &result.depth)?;
    write_depth(&confidence_path(path), &result.confidence_map())
}

pub fn read_depth_result(path: &Path) -> Result<DepthResult> {
    let depth = read_depth(path)?;
    let conf_path = confidence_path(path);
    let conf = read_depth(&conf_path)?;
    if conf.grid() != depth.grid() {
        return Err(Error::format(
            &conf_path,
            "confidence grid differs from depth grid",
        ));
    }
    Ok(DepthResult {
        depth,
        confidence: conf.into_data(),
    })
}

pub fn encode_splats(set: &SplatSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + set.len() * SPLAT_FLOATS * 4);
    out.extend_from_slice(SPLAT_MAGIC);
    out.extend_from_slice(&(set.len() as u32).to_le_bytes());
    for s in set.splats() {
        let fields = s
            .center
            .iter()
            .chain(&s.rotation)
            .chain(&s.scale)
            .chain(core::iter::once(&s.opacity))
            .chain(&s.color);
        for &v in fields {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_splats(path: &Path, bytes: &[u8]) -> Result<SplatSet> {
    if bytes.len() < 8 || &bytes[..4] != SPLAT_MAGIC {
        return Err(Error::format(path, "not an SPLT splat file"));
    }
    let n = u32_at(bytes, 4) as usize;
    if bytes.len() != 8 + n * SPLAT_FLOATS * 4 {
        return Err(Error::format(
            path,
            format!(
                "{n} splats need {} bytes, file has {}",
                8 + n * SPLAT_FLOATS * 4,
                bytes.len()
            ),
        ));
    }
    let values: Vec<f64> = f32s(&bytes[8..]).map(f64::from).collect();
    let splats = values
        .chunks_exact(SPLAT_FLOATS)
        .enumerate()
        .map(|(i, v)| {
            let s = Splat {
                center: [v[0], v[1], v[2]],
                rotation: [v[3], v[4], v[5], v[6]],
                scale: [v[7], v[8], v[9]],
                opacity: v[10],
                color: [v[11], v[12], v[13]],
            };
            if s.is_valid() {
                Ok(s)
            } else {
                Err(Error::format(path, format!("splat {i} is invalid")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SplatSet::from_splats(splats))
}

pub fn write_splats(path: &Path, set: &SplatSet) -> Result<()> {
    write_bytes(path, &encode_splats(set))
}

pub fn read_splats(path: &Path) -> Result<SplatSet> {
    decode_splats(path, &read_bytes(path)?)
}
