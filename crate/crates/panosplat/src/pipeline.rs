//! The commands behind the CLI, as library functions.

use std::fs;
use std::path::{Path, PathBuf};

use panosplat_core::cubemap::{erp_to_cubemap, Face};
use panosplat_core::gaussians::{decode_splats, merge, SplatConfig, SplatSet};
use panosplat_core::metrics::{depth_metrics, psnr, ssim, DepthMetrics};
use panosplat_core::renderer::{rasterize, render_panorama, PinholeCamera};
use panosplat_core::sweep::{estimate_depth, DepthConfig, DepthResult};
use panosplat_core::synth::SyntheticScene;
use panosplat_core::{DepthMap, ErpGrid, ErpImage, Pose};
use serde::Serialize;

use crate::formats::{write_depth, write_depth_result, write_png};
use crate::scene::{load_scene, select_eval_tuples, write_manifest, EvalTuple, Frame, Scene};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub preset: String,
    pub n_frames: usize,
    /// Length of the straight trajectory in meters.
    pub baseline: f64,
    pub seed: u64,
    pub height: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            preset: "room".into(),
            n_frames: 2,
            baseline: 0.5,
            seed: 0,
            height: 256,
        }
    }
}

/// Renders a synthetic scene directory with ground-truth depth.
pub fn synth(out: &Path, opts: &SynthOptions) -> Result<Scene> {
    let scene = SyntheticScene::preset(&opts.preset).ok_or_else(|| {
        Error::Scene(format!(
            "unknown preset {:?}, expected one of {:?}",
            opts.preset,
            SyntheticScene::PRESETS
        ))
    })?;
    let grid = ErpGrid::with_height(opts.height)?;
    let poses = scene.trajectory(opts.n_frames, opts.baseline, opts.seed)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut frames = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        let gt = scene.render_gt(pose, grid)?;
        let frame = Frame {
            image: format!("frame_{i:04}.png"),
            depth: Some(format!("frame_{i:04}.sdpt")),
            pose: *pose,
        };
        write_png(&out.join(&frame.image), &gt.image)?;
        write_depth(&out.join(frame.depth.as_ref().unwrap()), &gt.depth)?;
        frames.push(frame);
    }
    let defaults = DepthConfig::default();
    write_manifest(out, defaults.near, defaults.far, &frames)?;
    load_scene(out)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReconstructOptions {
    pub depth: DepthConfig,
    pub splats: SplatConfig,
    /// Decode splats from ground-truth depth (confidence 1) instead of
    /// estimating it.
    pub gt_depth: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub frames: [usize; 2],
    pub depths: Vec<DepthResult>,
    pub splats: SplatSet,
    /// Per context view, against ground truth when the scene has it.
    pub depth_metrics: Vec<Option<DepthMetrics>>,
}

/// Depth for both context views, decoded to splats and merged.
pub fn reconstruct(
    scene: &Scene,
    frames: [usize; 2],
    opts: &ReconstructOptions,
) -> Result<Reconstruction> {
    let images = frames
        .iter()
        .map(|&i| scene.load_image(i))
        .collect::<Result<Vec<_>>>()?;
    let poses = frames
        .iter()
        .map(|&i| scene.pose(i))
        .collect::<Result<Vec<_>>>()?;
    let gts = frames
        .iter()
        .map(|&i| scene.load_depth(i))
        .collect::<Result<Vec<_>>>()?;
    let depths = if opts.gt_depth {
        frames
            .iter()
            .zip(&gts)
            .map(|(i, gt)| {
                let depth = gt
                    .clone()
                    .ok_or_else(|| Error::Scene(format!("frame {i} has no ground-truth depth")))?;
                let confidence = vec![1.0; depth.data().len()];
                Ok(DepthResult { depth, confidence })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        estimate_depth(&images, &poses, &opts.depth)
            .map_err(|e| Error::Scene(format!("depth for frames {frames:?}: {e}")))?
    };
    let sets = images
        .iter()
        .zip(&depths)
        .zip(&poses)
        .zip(frames)
        .map(|(((img, d), pose), i)| decode_splats(img, d, pose, &opts.splats, i as u32))
        .collect::<panosplat_core::Result<Vec<_>>>()?;
    let depth_metrics = depths
        .iter()
        .zip(&gts)
        .map(|(d, gt)| gt.as_ref().and_then(|g| depth_metrics(&d.depth, g).ok()))
        .collect();
    Ok(Reconstruction {
        frames,
        depths,
        splats: merge(&sets),
        depth_metrics,
    })
}

/// Paths of the per-view depth files written next to a splat file.
pub fn view_depth_path(splat_path: &Path, frame: usize) -> PathBuf {
    let stem = splat_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "splats".into());
    splat_path.with_file_name(format!("{stem}.view{frame}.sdpt"))
}

/// Writes the splat file and, beside it, depth plus confidence per view.
pub fn write_reconstruction(splat_path: &Path, rec: &Reconstruction) -> Result<()> {
    crate::formats::write_splats(splat_path, &rec.splats)?;
    for (f, d) in rec.frames.iter().zip(&rec.depths) {
        write_depth_result(&view_depth_path(splat_path, *f), d)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RenderMode {
    Erp,
    /// Square pinhole view along the pose's forward axis.
    Pinhole {
        fov_deg: f64,
    },
}

/// A rendered RGB view with per-pixel depth (radial for ERP, z for pinhole).
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<f64>,
    pub depth: Vec<f64>,
}

impl RenderedView {
    pub fn rgb8(&self) -> Vec<u8> {
        self.rgb
            .iter()
            .map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn png(&self) -> Result<Vec<u8>> {
        crate::formats::encode_png(self.width, self.height, &self.rgb8())
    }
}

pub const BACKGROUND: [f64; 3] = [0.0; 3];

/// ERP renders are `width x width/2`; pinhole renders are `width x width`.
pub fn render_view(
    splats: &SplatSet,
    pose: &Pose,
    width: usize,
    mode: RenderMode,
) -> Result<RenderedView> {
    match mode {
        RenderMode::Erp => {
            if width == 0 || !width.is_multiple_of(4) {
                return Err(Error::Scene(format!(
                    "ERP width must be a positive multiple of 4, got {width}"
                )));
            }
            let grid = ErpGrid::new(width, width / 2)?;
            let out = render_panorama(splats, pose, grid, BACKGROUND);
            Ok(RenderedView {
                width,
                height: width / 2,
                rgb: out.image.into_data(),
                depth: out.depth.into_data(),
            })
        }
        RenderMode::Pinhole { fov_deg } => {
            if width == 0 {
                return Err(Error::Scene("pinhole width must be positive".into()));
            }
            let cam = PinholeCamera::looking_forward(pose, width, fov_deg.to_radians())?;
            let out = rasterize(splats, &cam, BACKGROUND);
            Ok(RenderedView {
                width,
                height: width,
                rgb: out.color,
                depth: out.depth,
            })
        }
    }
}

/// Front cubemap face of an ERP render, for comparison with a 90 degree
/// pinhole view.
pub fn front_face(img: &ErpImage, face_size: usize) -> Result<Vec<f64>> {
    Ok(erp_to_cubemap(img, face_size)?.face(Face::Front).to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub interval: usize,
    pub n_targets: usize,
    pub seed: u64,
    pub reconstruct: ReconstructOptions,
    /// Score ground-truth target depth in place of the rendered depth.
    pub bypass_depth: bool,
    /// Score ground-truth target images in place of the rendered images.
    pub bypass_color: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            interval: crate::scene::DEFAULT_INTERVAL,
            n_targets: crate::scene::DEFAULT_TARGETS,
            seed: 0,
            reconstruct: ReconstructOptions::default(),
            bypass_depth: false,
            bypass_color: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthSummary {
    pub abs_diff: f64,
    pub abs_rel: f64,
    pub rmse: f64,
    pub delta_1_25: f64,
}

impl DepthSummary {
    fn mean(ms: &[DepthMetrics]) -> Option<Self> {
        if ms.is_empty() {
            return None;
        }
        let n = ms.len() as f64;
        let avg = |f: fn(&DepthMetrics) -> f64| ms.iter().map(f).sum::<f64>() / n;
        Some(Self {
            abs_diff: avg(|m| m.abs_diff),
            abs_rel: avg(|m| m.abs_rel),
            rmse: avg(|m| m.rmse),
            delta_1_25: avg(|m| m.delta_1_25),
        })
    }

    fn rounded(self) -> Self {
        Self {
            abs_diff: sig6(self.abs_diff),
            abs_rel: sig6(self.abs_rel),
            rmse: sig6(self.rmse),
            delta_1_25: sig6(self.delta_1_25),
        }
    }
}

/// Scores of one tuple, averaged over its targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TupleScore {
    pub tuple: EvalTuple,
    pub psnr: f64,
    pub ssim: f64,
    pub depth: Option<DepthSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub tuples: usize,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub depth: Option<DepthSummary>,
    #[serde(skip)]
    pub rows: Vec<TupleScore>,
}

/// `x` rounded to 6 significant digits.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len() as f64;
    v.sum::<f64>() / n
}

/// Reconstructs every eval tuple from its context pair and scores the
/// rendered targets. Depth is scored only when all targets carry ground truth.
pub fn evaluate(scene: &Scene, opts: &EvalOptions) -> Result<EvalReport> {
    let tuples = select_eval_tuples(scene.frames.len(), opts.interval, opts.n_targets, opts.seed)?;
    let mut rows = Vec::with_capacity(tuples.len());
    for tuple in tuples {
        let need_render = !(opts.bypass_color && opts.bypass_depth);
        let rec = if need_render {
            Some(reconstruct(
                scene,
                [tuple.context.0, tuple.context.1],
                &opts.reconstruct,
            )?)
        } else {
            None
        };
        let (mut ps, mut ss, mut ds) = (Vec::new(), Vec::new(), Vec::new());
        let mut depth_complete = true;
        for &t in &tuple.targets {
            let gt_img = scene.load_image(t)?;
            let gt_depth = scene.load_depth(t)?;
            let pose = scene.pose(t)?;
            let rendered = rec
                .as_ref()
                .map(|r| render_panorama(&r.splats, &pose, gt_img.grid(), BACKGROUND));
            let image = match (&rendered, opts.bypass_color) {
                (Some(r), false) => &r.image,
                _ => &gt_img,
            };
            ps.push(psnr(image, &gt_img)?);
            ss.push(ssim(image, &gt_img)?);
            match &gt_depth {
                None => depth_complete = false,
                Some(gt) => {
                    let pred: &DepthMap = match (&rendered, opts.bypass_depth) {
                        (Some(r), false) => &r.depth,
                        _ => gt,
                    };
                    ds.push(
                        depth_metrics(pred, gt)
                            .map_err(|e| Error::Scene(format!("depth of frame {t}: {e}")))?,
                    );
                }
            }
        }
        rows.push(TupleScore {
            tuple,
            psnr: mean(ps.into_iter()),
            ssim: mean(ss.into_iter()),
            depth: if depth_complete {
                DepthSummary::mean(&ds)
            } else {
                None
            },
        });
    }
    let all_depth: Option<Vec<DepthSummary>> = rows.iter().map(|r| r.depth).collect();
    let depth = all_depth.filter(|d| !d.is_empty()).map(|d| {
        let n = d.len() as f64;
        DepthSummary {
            abs_diff: d.iter().map(|m| m.abs_diff).sum::<f64>() / n,
            abs_rel: d.iter().map(|m| m.abs_rel).sum::<f64>() / n,
            rmse: d.iter().map(|m| m.rmse).sum::<f64>() / n,
            delta_1_25: d.iter().map(|m| m.delta_1_25).sum::<f64>() / n,
        }
        .rounded()
    });
    let (psnr, ssim) = if rows.is_empty() {
        (None, None)
    } else {
        (
            Some(sig6(mean(rows.iter().map(|r| r.psnr)))),
            Some(sig6(mean(rows.iter().map(|r| r.ssim)))),
        )
    };
    Ok(EvalReport {
        tuples: rows.len(),
        psnr,
        ssim,
        depth,
        rows,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row per tuple; depth columns are empty when not scored.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "context_a",
            "context_b",
            "targets",
            "psnr",
            "ssim",
            "abs_diff",
            "abs_rel",
            "rmse",
            "delta_1_25",
        ])?;
        for r in &self.rows {
            let targets: Vec<String> = r.tuple.targets.iter().map(|t| t.to_string()).collect();
            let d = r.depth.map(DepthSummary::rounded);
            let opt = |f: fn(&DepthSummary) -> f64| {
                d.as_ref().map(|d| f(d).to_string()).unwrap_or_default()
            };
            w.write_record([
                r.tuple.context.0.to_string(),
                r.tuple.context.1.to_string(),
                targets.join(" "),
                sig6(r.psnr).to_string(),
                sig6(r.ssim).to_string(),
                opt(|d| d.abs_diff),
                opt(|d| d.abs_rel),
                opt(|d| d.rmse),
                opt(|d| d.delta_1_25),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Scene(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        fs::write(json_path, self.to_json()).map_err(|e| Error::io(json_path, e))?;
        fs::write(csv_path, self.to_csv()?).map_err(|e| Error::io(csv_path, e))
    }
}

/// Starting view for a viewer: the first frame of the scene when there is
/// one, otherwise the splat centroid with identity rotation.
pub fn suggested_pose(scene: Option<&Scene>, splats: &SplatSet) -> Pose {
    if let Some(f) = scene.and_then(|s| s.frames.first()) {
        return f.pose;
    }
    if splats.is_empty() {
        return Pose::identity();
    }
    let n = splats.len() as f64;
    let c = splats
        .splats()
        .iter()
        .fold(panosplat_core::geom::Vec3::zeros(), |acc, s| {
            acc + s.center()
        });
    Pose::from_translation(c / n)
}
