//! Scene directories: a `scene.json` manifest plus PNG panoramas and optional
//! `SDPT` ground-truth depth, all paths relative to the directory.

use std::fs;
use std::path::{Path, PathBuf};

use panosplat_core::{DepthMap, ErpImage, Pose};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::formats::{read_depth, read_png};
use crate::{Error, Result};

pub const MANIFEST: &str = "scene.json";
pub const DEFAULT_INTERVAL: usize = 100;
pub const DEFAULT_TARGETS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawFrame {
    image: String,
    depth: Option<String>,
    c2w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawManifest {
    near: f64,
    far: f64,
    frames: Vec<RawFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Image path relative to the scene directory.
    pub image: String,
    pub depth: Option<String>,
    pub pose: Pose,
}

/// A validated scene; frames are decoded on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub dir: PathBuf,
    pub near: f64,
    pub far: f64,
    pub frames: Vec<Frame>,
}

impl Scene {
    fn frame(&self, index: usize) -> Result<&Frame> {
        self.frames.get(index).ok_or_else(|| {
            Error::Scene(format!(
                "frame {index} does not exist (scene has {} frames)",
                self.frames.len()
            ))
        })
    }

    pub fn pose(&self, index: usize) -> Result<Pose> {
        Ok(self.frame(index)?.pose)
    }

    pub fn load_image(&self, index: usize) -> Result<ErpImage> {
        read_png(&self.dir.join(&self.frame(index)?.image))
    }

    pub fn has_depth(&self, index: usize) -> bool {
        self.frames.get(index).is_some_and(|f| f.depth.is_some())
    }

    /// Ground-truth depth of a frame, if the manifest lists one.
    pub fn load_depth(&self, index: usize) -> Result<Option<DepthMap>> {
        match &self.frame(index)?.depth {
            None => Ok(None),
            Some(p) => read_depth(&self.dir.join(p)).map(Some),
        }
    }
}

fn invalid(path: &Path, msg: String) -> Error {
    Error::format(path, msg)
}

/// Reads and validates `dir/scene.json`; every referenced file must exist.
pub fn load_scene(dir: &Path) -> Result<Scene> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let raw: RawManifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.clone(),
        source,
    })?;
    if !(raw.near > 0.0 && raw.near < raw.far && raw.far.is_finite()) {
        return Err(invalid(
            &path,
            format!("need 0 < near < far, got near {} far {}", raw.near, raw.far),
        ));
    }
    if raw.frames.is_empty() {
        return Err(invalid(&path, "frames list is empty".into()));
    }
    let frames = raw
        .frames
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let m: [f64; 16] = f.c2w.as_slice().try_into().map_err(|_| {
                invalid(
                    &path,
                    format!("frames[{i}].c2w has {} values, expected 16", f.c2w.len()),
                )
            })?;
            let pose = Pose::from_row_major(&m)
                .map_err(|e| invalid(&path, format!("frames[{i}].c2w: {e}")))?;
            for (key, rel) in [("image", Some(&f.image)), ("depth", f.depth.as_ref())] {
                if let Some(rel) = rel {
                    if !dir.join(rel).is_file() {
                        return Err(invalid(
                            &path,
                            format!("frames[{i}].{key}: missing file {rel}"),
                        ));
                    }
                }
            }
            Ok(Frame {
                image: f.image,
                depth: f.depth,
                pose,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scene {
        dir: dir.to_path_buf(),
        near: raw.near,
        far: raw.far,
        frames,
    })
}

/// Writes `dir/scene.json` for frames whose files are already in place.
pub fn write_manifest(dir: &Path, near: f64, far: f64, frames: &[Frame]) -> Result<()> {
    let raw = RawManifest {
        near,
        far,
        frames: frames
            .iter()
            .map(|f| RawFrame {
                image: f.image.clone(),
                depth: f.depth.clone(),
                c2w: f.pose.to_row_major().to_vec(),
            })
            .collect(),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&raw).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Context pair `(i, i + interval)` with targets strictly between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalTuple {
    pub context: (usize, usize),
    pub targets: Vec<usize>,
}

/// Evaluation tuples over a trajectory of `num_frames` frames: consecutive
/// non-overlapping windows of `interval` frames, each with `n_targets` seeded
/// distinct targets in ascending order. Too-short trajectories give no tuples.
pub fn select_eval_tuples(
    num_frames: usize,
    interval: usize,
    n_targets: usize,
    seed: u64,
) -> Result<Vec<EvalTuple>> {
    if interval < 2 {
        return Err(Error::Scene(format!(
            "interval must be at least 2, got {interval}"
        )));
    }
    if n_targets == 0 || n_targets > interval - 1 {
        return Err(Error::Scene(format!(
            "{n_targets} targets do not fit between frames {interval} apart"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut i = 0;
    while i + interval < num_frames {
        let mut targets: Vec<usize> = sample(&mut rng, interval - 1, n_targets)
            .into_iter()
            .map(|k| i + 1 + k)
            .collect();
        targets.sort_unstable();
        out.push(EvalTuple {
            context: (i, i + interval),
            targets,
        });
        i += interval;
    }
    Ok(out)
}
