//! File-based pipeline stages behind the command-line tool: ingest a COLMAP
//! model with raw frames, precompute linear training images, train, render,
//! evaluate and check gradients.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::camera::PoseRecord;
use crate::colmap::{build_scene, model_paths, parse_cameras, parse_images, parse_points3d, SceneBundle};
use crate::error::{Error, Result};
use crate::gradcheck::{GradcheckReport, Problem};
use crate::isp::image::{read_linear, write_depth_pgm, write_ldr, write_linear};
use crate::isp::{
    demosaic_bilinear, denoise, synthetic_defocus, tonemap, DenoiseMethod, LinearImage, NoiseParams, ToneCurve,
    ToneParams,
};
use crate::loss::{evaluate_protocol, serialize_db, LossConfig, LossMode};
use crate::raw_io::{load_raw_frame, normalize, Cfa};
use crate::render::{rasterize_forward, RasterConfig, View};
use crate::scene::{init_from_seed, load_ply, save_ply, GaussianCloud, PlyPrecision};
use crate::train::{Preset, TrainConfig, TrainView, Trainer};

pub const MANIFEST_FILE: &str = "scene.json";
pub const LINEAR_DIR: &str = "linear";
pub const ISP_RECORD_FILE: &str = "isp.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CLOUD_FILE: &str = "point_cloud.ply";
pub const EVAL_FILE: &str = "eval.json";
pub const DEFAULT_TEST_EVERY: usize = 8;

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Raw capture paired with one pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub name: String,
    pub mosaic: PathBuf,
    pub sidecar: PathBuf,
    pub cfa: Cfa,
    pub noise: NoiseParams,
    pub wb_gains: [f64; 3],
    pub ccm: [f64; 9],
}

impl FrameEntry {
    pub fn stem(&self) -> &str {
        Path::new(&self.name).file_stem().and_then(|s| s.to_str()).unwrap_or(&self.name)
    }
}

/// Everything later stages need to know about an ingested scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub n_views: usize,
    pub extent: f64,
    pub test_every: usize,
    pub train_views: Vec<String>,
    pub test_views: Vec<String>,
    pub bundle: SceneBundle,
    /// In pose order.
    pub frames: Vec<FrameEntry>,
}

impl SceneManifest {
    pub fn load(scene_dir: &Path) -> Result<Self> {
        let path = scene_dir.join(MANIFEST_FILE);
        serde_json::from_str(&read_text(&path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn pose_index(&self, name: &str) -> Option<usize> {
        self.bundle
            .poses
            .iter()
            .position(|p| p.name == name || p.stem() == name)
    }

    /// Tone parameters for a frame: `base` with the frame's own white balance
    /// and color matrix.
    pub fn frame_tone(&self, index: usize, base: &ToneParams) -> ToneParams {
        let f = &self.frames[index];
        ToneParams {
            wb_gains: f.wb_gains,
            ccm: f.ccm,
            ..base.clone()
        }
    }
}

/// Parses the COLMAP model in `colmap_dir`, pairs every pose with
/// `<raw_dir>/<stem>.pgm` and its `<stem>.json` sidecar, and writes the
/// manifest into `out_scene`.
pub fn ingest(colmap_dir: &Path, raw_dir: &Path, out_scene: &Path, test_every: usize) -> Result<SceneManifest> {
    let [cams, imgs, pts] = model_paths(colmap_dir)?;
    let seed = parse_points3d(&pts)?;
    let bundle = build_scene(parse_cameras(&cams)?, parse_images(&imgs)?, seed, test_every)?;
    let mut missing = Vec::new();
    let mut frames = Vec::new();
    for pose in &bundle.poses {
        let mosaic = raw_dir.join(format!("{}.pgm", pose.stem()));
        let sidecar = raw_dir.join(format!("{}.json", pose.stem()));
        if !mosaic.is_file() || !sidecar.is_file() {
            missing.push(pose.name.clone());
            continue;
        }
        let frame = load_raw_frame(&mosaic, &sidecar)?;
        let cam = bundle.camera_for(pose);
        if frame.width != cam.width || frame.height != cam.height {
            return Err(Error::Dimension(format!(
                "raw frame {} is {}x{} but camera {} is {}x{}",
                pose.name, frame.width, frame.height, cam.camera_id, cam.width, cam.height
            )));
        }
        frames.push(FrameEntry {
            name: pose.name.clone(),
            mosaic: absolute(&mosaic)?,
            sidecar: absolute(&sidecar)?,
            cfa: frame.cfa,
            noise: NoiseParams {
                k: frame.noise_k,
                sigma2: frame.noise_sigma2,
            },
            wb_gains: frame.wb_gains,
            ccm: frame.ccm,
        });
    }
    if !missing.is_empty() {
        return Err(Error::MissingRawFrames(missing));
    }
    let names = |idx: &[usize]| idx.iter().map(|&i| bundle.poses[i].name.clone()).collect();
    let manifest = SceneManifest {
        n_views: bundle.poses.len(),
        extent: bundle.extent,
        test_every,
        train_views: names(&bundle.train_indices),
        test_views: names(&bundle.test_indices),
        frames,
        bundle,
    };
    create_dir(out_scene)?;
    write_json(&manifest, &out_scene.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn absolute(path: &Path) -> Result<PathBuf> {
    fs::canonicalize(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedFile {
    pub name: String,
    pub sha256: String,
}

/// What [`run_isp`] wrote, with content hashes of every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IspRecord {
    pub denoiser: DenoiseMethod,
    pub files: Vec<HashedFile>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Linear training image path of pose `stem` inside a scene directory.
pub fn linear_path(scene_dir: &Path, stem: &str) -> PathBuf {
    scene_dir.join(LINEAR_DIR).join(format!("{stem}.lin"))
}

/// Denoises every raw frame in Bayer space and demosaics it into
/// `<scene>/linear/<stem>.lin`, once per scene.
pub fn run_isp(scene_dir: &Path, method: DenoiseMethod) -> Result<IspRecord> {
    let manifest = SceneManifest::load(scene_dir)?;
    create_dir(&scene_dir.join(LINEAR_DIR))?;
    let mut files = Vec::new();
    for frame in &manifest.frames {
        let raw = load_raw_frame(&frame.mosaic, &frame.sidecar)?;
        let plane = normalize(&raw)?;
        let np = NoiseParams {
            k: raw.noise_k,
            sigma2: raw.noise_sigma2,
        };
        let rgb = demosaic_bilinear(&denoise(&plane, method, &np)?);
        let out = linear_path(scene_dir, frame.stem());
        write_linear(&rgb, &out)?;
        files.push(HashedFile {
            name: format!("{}.lin", frame.stem()),
            sha256: sha256_file(&out)?,
        });
    }
    let record = IspRecord { denoiser: method, files };
    write_json(&record, &scene_dir.join(LINEAR_DIR).join(ISP_RECORD_FILE))?;
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Nominal 30000-iteration schedule.
    #[default]
    Full,
    /// Short schedule for small scenes, see [`TrainConfig::desk`].
    Desk,
}

/// Plain-text (JSON) configuration shared by train, render and eval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub scene_dir: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default = "default_denoiser")]
    pub denoiser: DenoiseMethod,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default = "default_preset")]
    pub preset: Preset,
    #[serde(default)]
    pub schedule: Schedule,
    /// Overrides the schedule's iteration count.
    #[serde(default)]
    pub iterations: Option<usize>,
    /// Individual [`TrainConfig`] fields replacing the preset's values.
    #[serde(default)]
    pub train: Map<String, Value>,
    #[serde(default)]
    pub raster: RasterConfig,
    #[serde(default)]
    pub tonemap: ToneParams,
    #[serde(default)]
    pub seed: u64,
    /// Write a checkpoint every this many iterations; 0 keeps only the final one.
    #[serde(default)]
    pub checkpoint_every: usize,
}

fn default_denoiser() -> DenoiseMethod {
    DenoiseMethod::Bilateral
}

fn default_preset() -> Preset {
    Preset::Tuned
}

impl PipelineConfig {
    pub fn new(scene_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            scene_dir: scene_dir.into(),
            output_dir: output_dir.into(),
            denoiser: default_denoiser(),
            loss: LossConfig::default(),
            preset: default_preset(),
            schedule: Schedule::default(),
            iterations: None,
            train: Map::new(),
            raster: RasterConfig::default(),
            tonemap: ToneParams::default(),
            seed: 0,
            checkpoint_every: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.scene_dir.is_dir() {
            return Err(Error::Config(format!("scene_dir {} does not exist", self.scene_dir.display())));
        }
        self.loss.validate()?;
        self.raster.validate()?;
        self.tonemap.validate()?;
        self.train_config()?.validate()
    }

    /// The preset schedule with `train` overrides applied and the config seed.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut base = match self.schedule {
            Schedule::Full => TrainConfig::preset(self.preset, self.iterations.unwrap_or(30_000)),
            Schedule::Desk => TrainConfig::desk(self.preset, self.iterations.unwrap_or(2000)),
        };
        base.seed = self.seed;
        if self.train.is_empty() {
            return Ok(base);
        }
        let Value::Object(mut fields) = serde_json::to_value(&base)? else {
            unreachable!("TrainConfig serializes to an object")
        };
        for (k, v) in &self.train {
            if !fields.contains_key(k) {
                return Err(Error::Config(format!("unknown train key `{k}`")));
            }
            fields.insert(k.clone(), v.clone());
        }
        serde_json::from_value(Value::Object(fields)).map_err(|e| Error::Config(format!("train: {e}")))
    }
}

/// Iteration encoded in a checkpoint file name `iter_NNNNNN.ply`.
pub fn checkpoint_iteration(path: &Path) -> Option<usize> {
    path.file_stem()?.to_str()?.strip_prefix("iter_")?.parse().ok()
}

pub fn checkpoint_path(output_dir: &Path, iteration: usize) -> PathBuf {
    output_dir.join(CHECKPOINT_DIR).join(format!("iter_{iteration:06}.ply"))
}

/// Loads the linear training images for every pose of the scene.
pub fn load_targets(scene_dir: &Path, manifest: &SceneManifest) -> Result<Vec<LinearImage>> {
    manifest
        .bundle
        .poses
        .iter()
        .map(|pose| {
            let path = linear_path(scene_dir, pose.stem());
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "missing linear image {}; run the isp stage first",
                    path.display()
                )));
            }
            read_linear(&path)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub start_iteration: usize,
    pub iterations: usize,
    pub n_points: usize,
    pub final_loss: f64,
    pub checkpoint: PathBuf,
}

/// Trains on the scene's training split. With `resume`, starts from that
/// checkpoint at the given iteration and appends to the existing log.
pub fn run_train(cfg: &PipelineConfig, resume: Option<(&Path, usize)>) -> Result<TrainSummary> {
    let tc = cfg.train_config()?;
    tc.validate()?;
    let manifest = SceneManifest::load(&cfg.scene_dir)?;
    let targets = load_targets(&cfg.scene_dir, &manifest)?;
    let bundle = &manifest.bundle;
    let views: Vec<TrainView> = bundle
        .train_indices
        .iter()
        .map(|&i| TrainView {
            camera: bundle.camera_for(&bundle.poses[i]).clone(),
            pose: bundle.poses[i].clone(),
            target: targets[i].clone(),
        })
        .collect();
    let (cloud, start) = match resume {
        Some((path, iter)) => (load_ply(path)?, iter),
        None => (init_from_seed(&bundle.seed, 0.01 * bundle.extent)?, 0),
    };
    if start > tc.iterations {
        return Err(Error::Config(format!(
            "resume iteration {start} is past the configured {} iterations",
            tc.iterations
        )));
    }
    create_dir(&cfg.output_dir.join(CHECKPOINT_DIR))?;
    let log_path = cfg.output_dir.join(TRAIN_LOG_FILE);
    let mut log = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(resume.is_some())
        .truncate(resume.is_none())
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let mut trainer = Trainer::new(
        cloud,
        &views,
        bundle.extent,
        tc.clone(),
        cfg.loss.clone(),
        cfg.raster.clone(),
        start,
    )?;
    let mut final_loss = f64::NAN;
    let every = cfg.checkpoint_every;
    let out = &cfg.output_dir;
    let result = trainer.run(|t, rec| {
        let mut line = serde_json::to_string(rec)?;
        line.push('\n');
        log.write_all(line.as_bytes()).map_err(|e| Error::io(&log_path, e))?;
        final_loss = rec.loss;
        if every > 0 && rec.iter % every == 0 && !t.is_done() {
            save_ply(t.cloud(), &checkpoint_path(out, rec.iter), PlyPrecision::F64)?;
        }
        Ok(())
    });
    if let Err(e) = result {
        if matches!(e, Error::Diverged { .. }) {
            let snapshot = out.join(format!("diverged_iter_{:06}.ply", trainer.iteration()));
            save_ply(trainer.cloud(), &snapshot, PlyPrecision::F64)?;
        }
        return Err(e);
    }
    let checkpoint = checkpoint_path(out, trainer.iteration());
    save_ply(trainer.cloud(), &checkpoint, PlyPrecision::F64)?;
    save_ply(trainer.cloud(), &out.join(FINAL_CLOUD_FILE), PlyPrecision::F64)?;
    Ok(TrainSummary {
        start_iteration: start,
        iterations: trainer.iteration(),
        n_points: trainer.cloud().len(),
        final_loss,
        checkpoint,
    })
}

/// Which camera to render from.
#[derive(Debug, Clone, PartialEq)]
pub enum PoseSpec {
    /// A pose of the scene by name or file stem.
    Named(String),
    /// The first scene camera placed at `eye` looking at `target`, `+y` up.
    LookAt { eye: [f64; 3], target: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderRequest {
    pub pose: PoseSpec,
    pub exposure_stops: f64,
    pub curve: Option<ToneCurve>,
    /// Depth map scale: counts per scene unit.
    pub depth_scale: Option<f64>,
    /// Focus depth and blur strength.
    pub defocus: Option<(f64, f64)>,
    pub linear_dump: bool,
}

impl Default for RenderRequest {
    fn default() -> Self {
        RenderRequest {
            pose: PoseSpec::Named(String::new()),
            exposure_stops: 0.0,
            curve: None,
            depth_scale: None,
            defocus: None,
            linear_dump: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderArtifacts {
    pub image: PathBuf,
    pub depth: Option<PathBuf>,
    pub linear: Option<PathBuf>,
}

/// Renders `cloud` from the requested pose and writes the tonemapped image
/// to `out_image` (PNG or PPM by extension), plus `<stem>_depth.pgm` and
/// `<stem>_linear.lin` next to it when requested. The linear dump holds the
/// exposure-scaled radiance before white balance and the tone curve.
pub fn run_render(
    cloud: &GaussianCloud,
    manifest: &SceneManifest,
    tone: &ToneParams,
    raster: &RasterConfig,
    req: &RenderRequest,
    out_image: &Path,
) -> Result<RenderArtifacts> {
    let bundle = &manifest.bundle;
    let owned;
    let (camera, pose): (_, &PoseRecord) = match &req.pose {
        PoseSpec::Named(name) => {
            let i = manifest
                .pose_index(name)
                .ok_or_else(|| Error::InvalidParameter(format!("no pose named {name:?} in the scene")))?;
            (bundle.camera_for(&bundle.poses[i]), &bundle.poses[i])
        }
        PoseSpec::LookAt { eye, target } => {
            let camera = bundle
                .cameras
                .first()
                .ok_or_else(|| Error::Colmap("scene has no cameras".into()))?;
            owned = PoseRecord::look_at(0, camera.camera_id, "look_at", *eye, *target, [0.0, 1.0, 0.0]);
            (camera, &owned)
        }
    };
    let out = rasterize_forward(cloud, &View::new(camera, pose), raster);
    let depth = out.expected_depth();
    let mut color = out.color;
    if let Some((focus, strength)) = req.defocus {
        color = synthetic_defocus(&color, &depth, focus, strength)?;
    }
    let mut tp = tone.clone().with_stops(req.exposure_stops);
    if let Some(curve) = req.curve {
        tp.curve = curve;
    }
    let parent = out_image.parent().unwrap_or(Path::new("."));
    create_dir(parent)?;
    write_ldr(&tonemap(&color, &tp)?, out_image)?;
    let stem = out_image.file_stem().and_then(|s| s.to_str()).unwrap_or("render");
    let depth_path = match req.depth_scale {
        Some(scale) => {
            let p = parent.join(format!("{stem}_depth.pgm"));
            write_depth_pgm(&depth, color.width, color.height, scale, &p)?;
            Some(p)
        }
        None => None,
    };
    let linear_path = if req.linear_dump {
        let p = parent.join(format!("{stem}_linear.lin"));
        let scaled = LinearImage {
            data: color.data.iter().map(|v| v * tp.exposure).collect(),
            ..color.clone()
        };
        write_linear(&scaled, &p)?;
        Some(p)
    } else {
        None
    };
    Ok(RenderArtifacts {
        image: out_image.to_path_buf(),
        depth: depth_path,
        linear: linear_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewMetrics {
    pub view: String,
    #[serde(serialize_with = "serialize_db")]
    pub psnr: f64,
    pub ssim: f64,
    pub loss_mode: LossMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub views: Vec<ViewMetrics>,
    #[serde(serialize_with = "serialize_db")]
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Source of the renders being evaluated.
#[derive(Debug, Clone, Copy)]
pub enum EvalSource<'a> {
    Cloud(&'a GaussianCloud),
    /// Directory of `<stem>.lin` linear renders.
    LinearDir(&'a Path),
}

/// Scores every test view against its tonemapped ground truth after color
/// correction, and writes `eval.json` into the output directory.
pub fn run_eval(cfg: &PipelineConfig, source: EvalSource) -> Result<EvalReport> {
    let manifest = SceneManifest::load(&cfg.scene_dir)?;
    let bundle = &manifest.bundle;
    if bundle.test_indices.is_empty() {
        return Err(Error::Config(format!(
            "scene {} has no test split (test_every = {})",
            cfg.scene_dir.display(),
            manifest.test_every
        )));
    }
    let mut views = Vec::new();
    for &i in &bundle.test_indices {
        let pose = &bundle.poses[i];
        let gt = read_linear(&linear_path(&cfg.scene_dir, pose.stem()))?;
        let render = match source {
            EvalSource::Cloud(cloud) => {
                rasterize_forward(cloud, &View::new(bundle.camera_for(pose), pose), &cfg.raster).color
            }
            EvalSource::LinearDir(dir) => read_linear(&dir.join(format!("{}.lin", pose.stem())))?,
        };
        let tp = manifest.frame_tone(i, &cfg.tonemap);
        let m = evaluate_protocol(&render, &tonemap(&gt, &tp)?, &tp)?;
        views.push(ViewMetrics {
            view: pose.stem().to_string(),
            psnr: m.psnr,
            ssim: m.ssim,
            loss_mode: cfg.loss.mode,
        });
    }
    let n = views.len() as f64;
    let report = EvalReport {
        mean_psnr: views.iter().map(|v| v.psnr).sum::<f64>() / n,
        mean_ssim: views.iter().map(|v| v.ssim).sum::<f64>() / n,
        views,
    };
    create_dir(&cfg.output_dir)?;
    write_json(&report, &cfg.output_dir.join(EVAL_FILE))?;
    Ok(report)
}

/// Finite-difference check of every parameter class on a random scene, with
/// an extra splat just past the near plane when `near_clip` is set.
pub fn run_gradcheck(seed: u64, n: usize, size: usize, near_clip: bool) -> Result<GradcheckReport> {
    if n == 0 || size < 11 {
        return Err(Error::InvalidParameter("gradcheck needs n >= 1 and size >= 11".into()));
    }
    let mut problem = Problem::random(seed, n, size);
    if near_clip {
        problem = problem.with_near_clip_splat();
    }
    problem.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_names_round_trip() {
        let p = checkpoint_path(Path::new("/x"), 1500);
        assert_eq!(p, Path::new("/x/checkpoints/iter_001500.ply"));
        assert_eq!(checkpoint_iteration(&p), Some(1500));
        assert_eq!(checkpoint_iteration(Path::new("point_cloud.ply")), None);
    }

    #[test]
    fn config_rejects_unknown_keys_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().display();
        let err = PipelineConfig::from_json(&format!(r#"{{"scene_dir": "{d}", "output_dir": "{d}", "learning_rate": 1}}"#))
            .unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        let err = PipelineConfig::from_json(&format!(
            r#"{{"scene_dir": "{d}", "output_dir": "{d}", "train": {{"densify_thresh": 1}}}}"#
        ))
        .unwrap_err();
        assert!(err.to_string().contains("densify_thresh"), "{err}");
        let err = PipelineConfig::from_json(&format!(
            r#"{{"scene_dir": "{d}", "output_dir": "{d}", "loss": {{"lambda": 0.8, "eps": 1}}}}"#
        ))
        .unwrap_err();
        assert!(err.to_string().contains("eps"), "{err}");
    }

    #[test]
    fn config_requires_existing_scene_dir() {
        let err = PipelineConfig::from_json(r#"{"scene_dir": "/no/such/dir", "output_dir": "/tmp/x"}"#).unwrap_err();
        assert!(err.to_string().contains("/no/such/dir"));
    }

    #[test]
    fn train_overrides_apply_over_the_preset() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().display();
        let cfg = PipelineConfig::from_json(&format!(
            r#"{{"scene_dir": "{d}", "output_dir": "{d}", "preset": "baseline", "schedule": "desk",
                "iterations": 400, "seed": 7, "train": {{"sh_degree": 1}}}}"#
        ))
        .unwrap();
        let tc = cfg.train_config().unwrap();
        let expect = TrainConfig {
            sh_degree: 1,
            seed: 7,
            ..TrainConfig::desk(Preset::Baseline, 400)
        };
        assert_eq!(tc, expect);
    }
}
