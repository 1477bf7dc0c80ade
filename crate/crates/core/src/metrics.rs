//! Image and depth quality metrics.

use crate::image::{DepthMap, ErpImage};
use crate::prelude::*;
use crate::{Error, Result};

/// PSNR reported for (numerically) identical images.
pub const PSNR_CAP: f64 = 100.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_same_shape(a: &ErpImage, b: &ErpImage) -> Result<()> {
    if a.grid() != b.grid() || a.channels() != b.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

pub fn mse(a: &ErpImage, b: &ErpImage) -> Result<f64> {
    check_same_shape(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB for images in `[0, 1]`, capped at
/// [`PSNR_CAP`] when the MSE drops below `1e-10`.
pub fn psnr(a: &ErpImage, b: &ErpImage) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m < 1e-10 {
        PSNR_CAP
    } else {
        10.0 * (1.0 / m).log10()
    })
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter over the positions where the whole window fits.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity: 11x11 Gaussian window (sigma 1.5), k1 = 0.01,
/// k2 = 0.03, dynamic range 1, averaged over valid windows and channels.
pub fn ssim(a: &ErpImage, b: &ErpImage) -> Result<f64> {
    check_same_shape(a, b)?;
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ShapeMismatch(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let k = gaussian_kernel();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..ch {
        let pa: Vec<f64> = a.data().iter().skip(c).step_by(ch).copied().collect();
        let pb: Vec<f64> = b.data().iter().skip(c).step_by(ch).copied().collect();
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(&pa, w, h, &k);
        let mu_b = filter_valid(&pb, w, h, &k);
        let e_aa = filter_valid(&aa, w, h, &k);
        let e_bb = filter_valid(&bb, w, h, &k);
        let e_ab = filter_valid(&ab, w, h, &k);
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Depth errors over pixels valid in both maps; `delta_1_25` is a percentage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub abs_diff: f64,
    pub abs_rel: f64,
    pub rmse: f64,
    pub delta_1_25: f64,
    pub valid_pixels: usize,
}

pub fn depth_metrics(pred: &DepthMap, gt: &DepthMap) -> Result<DepthMetrics> {
    depth_metrics_masked(pred, gt, None)
}

/// Like [`depth_metrics`], additionally restricted to pixels where `mask` is set.
pub fn depth_metrics_masked(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: Option<&[bool]>,
) -> Result<DepthMetrics> {
    if pred.grid() != gt.grid() {
        return Err(Error::ShapeMismatch("depth maps on different grids".into()));
    }
    if let Some(m) = mask {
        if m.len() != gt.data().len() {
            return Err(Error::ShapeMismatch(
                "mask length differs from depth map".into(),
            ));
        }
    }
    let (mut abs, mut rel, mut sq, mut good, mut n) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for (i, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
        if p <= 0.0 || g <= 0.0 || mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let d = (p - g).abs();
        abs += d;
        rel += d / g;
        sq += d * d;
        if (p / g).max(g / p) < 1.25 {
            good += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoValidPixels);
    }
    let nf = n as f64;
    Ok(DepthMetrics {
        abs_diff: abs / nf,
        abs_rel: rel / nf,
        rmse: (sq / nf).sqrt(),
        delta_1_25: 100.0 * good as f64 / nf,
        valid_pixels: n,
    })
}
