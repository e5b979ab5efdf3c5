use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rawsplat::isp::{DenoiseMethod, ToneCurve, ToneParams};
use rawsplat::pipeline::{
    checkpoint_iteration, ingest, run_eval, run_gradcheck, run_isp, run_render, run_train, EvalSource,
    PipelineConfig, PoseSpec, RenderRequest, SceneManifest, DEFAULT_TEST_EVERY,
};
use rawsplat::render::RasterConfig;
use rawsplat::scene::load_ply;
use rawsplat::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "rawsplat", version, about = "Gaussian splatting on linear raw captures")]
struct Cli {
    /// Worker threads for rendering (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pair a COLMAP model with raw frames and write a scene manifest.
    Ingest {
        #[arg(long)]
        colmap: PathBuf,
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Hold out every n-th view for evaluation; 0 disables the split.
        #[arg(long, default_value_t = DEFAULT_TEST_EVERY)]
        test_every: usize,
    },
    /// Denoise and demosaic every raw frame of a scene once.
    Isp {
        #[arg(long, required_unless_present = "config")]
        scene: Option<PathBuf>,
        /// Takes the scene and denoiser from a pipeline config.
        #[arg(long, conflicts_with = "scene")]
        config: Option<PathBuf>,
        /// passthrough | median3 | bilateral [default: bilateral]
        #[arg(long)]
        denoiser: Option<DenoiseMethod>,
    },
    /// Optimize a Gaussian cloud against the scene's training views.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Iteration of the resumed checkpoint, if not encoded in its name.
        #[arg(long)]
        start_iteration: Option<usize>,
    },
    /// Render a trained cloud with post-capture exposure, tone curve and focus.
    Render {
        #[arg(long)]
        ply: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Tone and raster settings; defaults apply without it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scene pose name or file stem.
        #[arg(long, conflicts_with = "look_at")]
        view: Option<String>,
        /// ex,ey,ez,tx,ty,tz
        #[arg(long, value_delimiter = ',', num_args = 6)]
        look_at: Option<Vec<f64>>,
        /// Exposure change in stops.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        exposure: f64,
        /// srgb_gamma | reinhard_global | linear_clip
        #[arg(long)]
        tonemap: Option<ToneCurve>,
        /// Also write a 16-bit depth PGM with this many counts per scene unit.
        #[arg(long, num_args = 0..=1, default_missing_value = "1000")]
        depth: Option<f64>,
        /// focus_depth,strength
        #[arg(long, value_delimiter = ',', num_args = 2)]
        defocus: Option<Vec<f64>>,
        /// Also dump the exposure-scaled linear render.
        #[arg(long)]
        linear: bool,
        /// Output image, .png or .ppm.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score held-out views after tonemapping and color correction.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, required_unless_present = "renders")]
        ply: Option<PathBuf>,
        /// Directory of linear `<stem>.lin` renders to score instead of a cloud.
        #[arg(long, conflicts_with = "ply")]
        renders: Option<PathBuf>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image side in pixels.
        #[arg(long, default_value_t = 32)]
        size: usize,
        /// Number of Gaussians.
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Add a splat just past the near plane.
        #[arg(long)]
        near_clip: bool,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(Error::io("<stdout>", e)),
        _ => Ok(()),
    }
}

fn resume_target(resume: &Option<PathBuf>, start: Option<usize>) -> Result<Option<(&Path, usize)>> {
    let Some(path) = resume else {
        return Ok(None);
    };
    let iter = start.or_else(|| checkpoint_iteration(path)).ok_or_else(|| {
        Error::Config(format!(
            "cannot tell the iteration of {}; pass --start-iteration",
            path.display()
        ))
    })?;
    Ok(Some((path.as_path(), iter)))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Ingest {
            colmap,
            raw,
            out,
            test_every,
        } => {
            let m = ingest(&colmap, &raw, &out, test_every)?;
            print_json(&serde_json::json!({
                "n_views": m.n_views,
                "extent": m.extent,
                "train_views": m.train_views,
                "test_views": m.test_views,
            }))?;
        }
        Command::Isp {
            scene,
            config,
            denoiser,
        } => {
            let (scene, default) = match (scene, config) {
                (Some(scene), _) => (scene, DenoiseMethod::Bilateral),
                (None, Some(path)) => {
                    let cfg = PipelineConfig::load(&path)?;
                    (cfg.scene_dir, cfg.denoiser)
                }
                (None, None) => unreachable!("enforced by clap"),
            };
            print_json(&run_isp(&scene, denoiser.unwrap_or(default))?)?;
        }
        Command::Train {
            config,
            resume,
            start_iteration,
        } => {
            let cfg = PipelineConfig::load(&config)?;
            print_json(&run_train(&cfg, resume_target(&resume, start_iteration)?)?)?;
        }
        Command::Render {
            ply,
            scene,
            config,
            view,
            look_at,
            exposure,
            tonemap,
            depth,
            defocus,
            linear,
            out,
        } => {
            let (tone, raster) = match config {
                Some(path) => {
                    let cfg = PipelineConfig::load(&path)?;
                    (cfg.tonemap, cfg.raster)
                }
                None => (ToneParams::default(), RasterConfig::default()),
            };
            let pose = match (view, look_at) {
                (Some(name), _) => PoseSpec::Named(name),
                (None, Some(v)) => PoseSpec::LookAt {
                    eye: [v[0], v[1], v[2]],
                    target: [v[3], v[4], v[5]],
                },
                (None, None) => return Err(Error::InvalidParameter("pass --view or --look-at".into())),
            };
            let req = RenderRequest {
                pose,
                exposure_stops: exposure,
                curve: tonemap,
                depth_scale: depth,
                defocus: defocus.map(|d| (d[0], d[1])),
                linear_dump: linear,
            };
            let manifest = SceneManifest::load(&scene)?;
            print_json(&run_render(&load_ply(&ply)?, &manifest, &tone, &raster, &req, &out)?)?;
        }
        Command::Eval { config, ply, renders } => {
            let cfg = PipelineConfig::load(&config)?;
            let report = match (&ply, &renders) {
                (Some(p), _) => run_eval(&cfg, EvalSource::Cloud(&load_ply(p)?))?,
                (None, Some(dir)) => run_eval(&cfg, EvalSource::LinearDir(dir))?,
                (None, None) => unreachable!("enforced by clap"),
            };
            print_json(&report)?;
        }
        Command::Gradcheck {
            seed,
            size,
            n,
            near_clip,
        } => {
            let report = run_gradcheck(seed, n, size, near_clip)?;
            print_json(&report)?;
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
