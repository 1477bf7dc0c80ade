use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use panosplat::formats::{encode_depth, read_splats, write_rgb8_png};
use panosplat::pipeline::{
    evaluate, reconstruct, render_view, suggested_pose, synth, view_depth_path,
    write_reconstruction, EvalOptions, ReconstructOptions, RenderMode, SynthOptions,
};
use panosplat::scene::{load_scene, Scene, DEFAULT_INTERVAL, DEFAULT_TARGETS};
use panosplat::server::{serve, AppState};
use panosplat_core::gaussians::{SplatConfig, DEFAULT_OPACITY_FLOOR, DEFAULT_SCALE_MULTIPLIER};
use panosplat_core::sweep::{
    DepthConfig, DEFAULT_CANDIDATES, DEFAULT_DOWNSAMPLE, DEFAULT_REFINE_RADIUS, DEFAULT_TEMPERATURE,
};
use panosplat_core::Pose;

#[derive(Parser)]
#[command(
    name = "panosplat",
    version,
    about = "Panoramic novel-view synthesis with spherical sweeps and Gaussian splats"
)]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene directory with ground-truth depth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "room")]
        preset: String,
        #[arg(long = "frames", default_value_t = 2)]
        n_frames: usize,
        /// Trajectory length in meters.
        #[arg(long, default_value_t = 0.5)]
        baseline: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Panorama height; width is twice this.
        #[arg(long, default_value_t = 256)]
        height: usize,
    },
    /// Estimate depth for two frames and write their merged splats.
    Reconstruct {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, num_args = 2, value_names = ["I", "J"])]
        frames: Vec<usize>,
        #[command(flatten)]
        depth: DepthArgs,
        /// Output splat file; per-view depth is written beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render splats at a scene frame pose or an explicit camera-to-world matrix.
    Render {
        #[arg(long)]
        splats: PathBuf,
        #[arg(long, requires = "frame", conflicts_with = "c2w")]
        scene: Option<PathBuf>,
        #[arg(long)]
        frame: Option<usize>,
        /// 16 row-major values.
        #[arg(long, num_args = 16, allow_negative_numbers = true)]
        c2w: Option<Vec<f64>>,
        #[arg(long, default_value_t = 512)]
        width: usize,
        #[arg(long, value_enum, default_value_t = Mode::Erp)]
        mode: Mode,
        /// Horizontal field of view for pinhole mode, in degrees.
        #[arg(long, default_value_t = 90.0)]
        fov: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the rendered depth as SDPT.
        #[arg(long)]
        depth_out: Option<PathBuf>,
    },
    /// Reconstruct every eval tuple of a scene and score the held-out targets.
    Eval {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = DEFAULT_INTERVAL)]
        interval: usize,
        #[arg(long, default_value_t = DEFAULT_TARGETS)]
        targets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        depth: DepthArgs,
        /// Score ground-truth target depth instead of rendered depth.
        #[arg(long)]
        bypass_depth: bool,
        /// Score ground-truth target images instead of rendered images.
        #[arg(long)]
        bypass_color: bool,
        #[arg(long, default_value = "report.json")]
        json: PathBuf,
        #[arg(long, default_value = "report.csv")]
        csv: PathBuf,
    },
    /// Serve renders over HTTP for the viewer.
    Serve {
        #[arg(long, required_unless_present = "scene")]
        splats: Option<PathBuf>,
        /// Scene directory: reconstructed from `--frames` (default first and last) at startup,
        /// or used for near/far and the starting pose when `--splats` is given.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["I", "J"])]
        frames: Option<Vec<usize>>,
        #[command(flatten)]
        depth: DepthArgs,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory of viewer assets served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Concurrent renders (default: worker threads).
        #[arg(long)]
        max_renders: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Erp,
    Pinhole,
}

#[derive(Args)]
struct DepthArgs {
    /// Depth candidates.
    #[arg(long = "candidates", default_value_t = DEFAULT_CANDIDATES)]
    d: usize,
    /// Nearest candidate in meters (default: scene near).
    #[arg(long)]
    near: Option<f64>,
    /// Farthest candidate in meters (default: scene far).
    #[arg(long)]
    far: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TEMPERATURE)]
    temperature: f64,
    /// Splat footprint multiplier.
    #[arg(long, default_value_t = DEFAULT_SCALE_MULTIPLIER)]
    sigma: f64,
    #[arg(long, default_value_t = DEFAULT_DOWNSAMPLE)]
    downsample: usize,
    #[arg(long, default_value_t = DEFAULT_REFINE_RADIUS)]
    refine_radius: usize,
    /// Decode splats from ground-truth depth instead of estimating it.
    #[arg(long)]
    gt_depth: bool,
}

impl DepthArgs {
    fn options(&self, scene: &Scene) -> ReconstructOptions {
        ReconstructOptions {
            depth: DepthConfig {
                near: self.near.unwrap_or(scene.near),
                far: self.far.unwrap_or(scene.far),
                num_candidates: self.d,
                downsample: self.downsample,
                temperature: self.temperature,
                refine_radius: self.refine_radius,
                ..DepthConfig::default()
            },
            splats: SplatConfig {
                scale_multiplier: self.sigma,
                opacity_floor: DEFAULT_OPACITY_FLOOR,
            },
            gt_depth: self.gt_depth,
        }
    }
}

fn load(dir: &Path) -> anyhow::Result<Scene> {
    load_scene(dir).with_context(|| format!("loading scene {}", dir.display()))
}

fn pair(frames: &[usize]) -> [usize; 2] {
    [frames[0], frames[1]]
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth {
            out,
            preset,
            n_frames,
            baseline,
            seed,
            height,
        } => {
            let opts = SynthOptions {
                preset,
                n_frames,
                baseline,
                seed,
                height,
            };
            let scene = synth(&out, &opts)?;
            println!("wrote {} frames to {}", scene.frames.len(), out.display());
        }
        Command::Reconstruct {
            scene,
            frames,
            depth,
            out,
        } => {
            let scene = load(&scene)?;
            let frames = pair(&frames);
            let rec = reconstruct(&scene, frames, &depth.options(&scene))?;
            write_reconstruction(&out, &rec)?;
            println!("{} splats -> {}", rec.splats.len(), out.display());
            for (f, m) in frames.iter().zip(&rec.depth_metrics) {
                println!("depth {}", view_depth_path(&out, *f).display());
                if let Some(m) = m {
                    println!(
                        "frame {f}: abs_diff {:.6} abs_rel {:.6} rmse {:.6} delta_1.25 {:.4}%",
                        m.abs_diff, m.abs_rel, m.rmse, m.delta_1_25
                    );
                }
            }
        }
        Command::Render {
            splats,
            scene,
            frame,
            c2w,
            width,
            mode,
            fov,
            out,
            depth_out,
        } => {
            let set = read_splats(&splats)?;
            let pose = match (scene, frame, c2w) {
                (Some(dir), Some(i), None) => load(&dir)?.pose(i)?,
                (None, None, Some(m)) => {
                    let m: [f64; 16] = m.as_slice().try_into().context("--c2w needs 16 values")?;
                    Pose::from_row_major(&m).context("--c2w")?
                }
                _ => bail!("give either --scene with --frame, or --c2w"),
            };
            let mode = match mode {
                Mode::Erp => RenderMode::Erp,
                Mode::Pinhole => RenderMode::Pinhole { fov_deg: fov },
            };
            let view = render_view(&set, &pose, width, mode)?;
            write_rgb8_png(&out, view.width, view.height, &view.rgb8())?;
            if let Some(p) = depth_out {
                std::fs::write(&p, encode_depth(view.width, view.height, &view.depth))
                    .with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Eval {
            scene,
            interval,
            targets,
            seed,
            depth,
            bypass_depth,
            bypass_color,
            json,
            csv,
        } => {
            let scene = load(&scene)?;
            let opts = EvalOptions {
                interval,
                n_targets: targets,
                seed,
                reconstruct: depth.options(&scene),
                bypass_depth,
                bypass_color,
            };
            let report = evaluate(&scene, &opts)?;
            report.write(&json, &csv)?;
            print!("{}", report.to_json());
        }
        Command::Serve {
            splats,
            scene,
            frames,
            depth,
            host,
            port,
            static_dir,
            max_renders,
        } => {
            let scene = scene.map(|d| load(&d)).transpose()?;
            let set = match (&splats, &scene) {
                (Some(p), _) => read_splats(p)?,
                (None, Some(s)) => {
                    let frames = frames.map(|f| pair(&f)).unwrap_or([0, s.frames.len() - 1]);
                    eprintln!("reconstructing frames {frames:?}");
                    reconstruct(s, frames, &depth.options(s))?.splats
                }
                (None, None) => unreachable!("clap requires one of --splats/--scene"),
            };
            let defaults = DepthConfig::default();
            let (near, far) = scene
                .as_ref()
                .map_or((defaults.near, defaults.far), |s| (s.near, s.far));
            let pose = suggested_pose(scene.as_ref(), &set);
            let cap = max_renders.unwrap_or_else(rayon::current_num_threads);
            let state = Arc::new(AppState::new(set, near, far, pose, cap));
            let addr: SocketAddr = format!("{host}:{port}").parse().context("--host/--port")?;
            tokio::runtime::Runtime::new()?.block_on(serve(addr, state, static_dir))?;
        }
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    run(cli)
}
