//! Procedural HDR test scenes with known ground truth.
//!
//! A scene is a lit backdrop wall plus clusters of anisotropic Gaussians
//! ranging from a bright lamp to near-black objects, watched by cameras on an
//! arc. It renders clean linear targets, simulated noisy raw captures, and
//! seed point clouds for re-fitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, PoseRecord};
use crate::colmap::{build_scene, SceneBundle, SeedCloud};
use crate::error::{Error, Result};
use crate::isp::{demosaic_bilinear, denoise, DenoiseMethod, LinearImage, NoiseParams};
use crate::raw_io::{BayerPlane, Cfa, RawFrame};
use crate::render::{rasterize_forward, RasterConfig, View};
use crate::scene::sh::{rgb_to_dc, SH_C0};
use crate::scene::{logit, GaussianCloud};
use crate::train::TrainView;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub n_gaussians: usize,
    pub n_views: usize,
    pub test_every: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            n_gaussians: 300,
            n_views: 25,
            test_every: 5,
            width: 64,
            height: 64,
            seed: 0,
        }
    }
}

/// Ground-truth cloud plus the reconstruction layout it is observed through.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub truth: GaussianCloud,
    pub bundle: SceneBundle,
}

const WALL_COLS: usize = 13;
const WALL_ROWS: usize = 10;
const WALL_Z: f64 = 2.5;
const WALL_SPACING: f64 = 1.2;
const CAMERA_DISTANCE: f64 = 4.0;
const MAX_AZIMUTH_DEG: f64 = 35.0;
const MAX_ELEVATION_DEG: f64 = 12.0;

/// Radiance band of each object cluster: lamp, three mid-tone, one dark.
const CLUSTERS: [([f64; 3], f64, f64); 5] = [
    ([0.6, -0.5, 0.2], 1.2, 2.0),
    ([-0.8, 0.3, 0.0], 0.05, 0.6),
    ([0.1, 0.6, -0.4], 0.05, 0.6),
    ([0.9, 0.5, 0.8], 0.05, 0.6),
    ([-0.3, -0.6, 0.6], 0.002, 0.01),
];

fn random_quat(rng: &mut impl Rng) -> [f64; 4] {
    let v: [f64; 4] = [0; 4].map(|_| rng.sample(StandardNormal));
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.map(|x| x / n)
}

fn sh_for(rgb: [f64; 3], view_dependence: f64, rng: &mut impl Rng) -> [[f64; 3]; 16] {
    let mut sh = [[0.0; 3]; 16];
    sh[0] = rgb.map(rgb_to_dc);
    for coeff in sh.iter_mut().take(4).skip(1) {
        for (c, v) in coeff.iter_mut().enumerate() {
            *v = view_dependence * rgb[c] * rng.random_range(-1.0..1.0);
        }
    }
    sh
}

/// Camera-path position `p` in `0..n` to an eye point on the arc.
fn eye_at(p: usize, n: usize) -> [f64; 3] {
    let t = if n > 1 { p as f64 / (n - 1) as f64 } else { 0.5 };
    let az = (-MAX_AZIMUTH_DEG + 2.0 * MAX_AZIMUTH_DEG * t).to_radians();
    let el = (MAX_ELEVATION_DEG * (p as f64 * 1.3).sin()).to_radians();
    let d = CAMERA_DISTANCE;
    [d * az.sin() * el.cos(), d * el.sin(), -d * az.cos() * el.cos()]
}

impl SyntheticScene {
    pub fn generate(spec: &SceneSpec) -> Result<Self> {
        let wall = WALL_COLS * WALL_ROWS;
        if spec.n_gaussians < wall + CLUSTERS.len() {
            return Err(Error::InvalidParameter(format!(
                "a synthetic scene needs at least {} Gaussians",
                wall + CLUSTERS.len()
            )));
        }
        if spec.n_views == 0 || spec.width < 16 || spec.height < 16 {
            return Err(Error::InvalidParameter("need views and images of at least 16x16".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut truth = GaussianCloud::default();
        let flat = [0.7f64.ln(), 0.7f64.ln(), 0.05f64.ln()];
        for r in 0..WALL_ROWS {
            for c in 0..WALL_COLS {
                let x = (c as f64 - (WALL_COLS - 1) as f64 / 2.0) * WALL_SPACING;
                let y = (r as f64 - (WALL_ROWS - 1) as f64 / 2.0) * WALL_SPACING;
                let level = if x < 0.0 {
                    rng.random_range(1e-3..3e-3)
                } else {
                    rng.random_range(0.02..0.1)
                };
                let tint = [0; 3].map(|_| rng.random_range(0.8..1.2));
                let rgb = [level * tint[0], level * tint[1], level * tint[2]];
                let sh = sh_for(rgb, 0.0, &mut rng);
                truth.push([x, y, WALL_Z], flat, [1.0, 0.0, 0.0, 0.0], sh, logit(0.98));
            }
        }
        let objects = spec.n_gaussians - wall;
        for k in 0..objects {
            let (center, lo, hi) = CLUSTERS[k % CLUSTERS.len()];
            let p = [0; 3].map(|_| rng.random_range(-0.35..0.35));
            let pos = [center[0] + p[0], center[1] + p[1], center[2] + p[2]];
            let log_scale = [0; 3].map(|_| rng.random_range(0.05f64.ln()..0.22f64.ln()));
            let level = (lo as f64).ln() + rng.random::<f64>() * ((hi / lo) as f64).ln();
            let hue = [0; 3].map(|_| rng.random_range(0.6..1.0));
            let rgb = hue.map(|h| h * level.exp());
            let sh = sh_for(rgb, 0.08, &mut rng);
            let opacity = rng.random_range(0.6..0.95);
            truth.push(pos, log_scale, random_quat(&mut rng), sh, logit(opacity));
        }
        let camera = Camera::new(1, spec.width, spec.height, spec.width as f64, spec.width as f64 / 2.0, spec.height as f64 / 2.0)?;
        let n = spec.n_views;
        let poses: Vec<PoseRecord> = (0..n)
            .map(|i| {
                // interleave so held-out views sit between training views
                let p = (2 * i + 1) % n.max(1);
                PoseRecord::look_at(i as u32 + 1, 1, &format!("view_{i:03}.pgm"), eye_at(p, n), [0.0, 0.0, 0.5], [0.0, 1.0, 0.0])
            })
            .collect();
        let seed = seed_from(&truth, &vec![true; truth.len()], 0.0, &mut rng);
        let bundle = build_scene(vec![camera], poses, seed, spec.test_every)?;
        Ok(SyntheticScene { truth, bundle })
    }

    pub fn camera(&self) -> &Camera {
        &self.bundle.cameras[0]
    }

    /// Clean linear renders of every view, in pose order.
    pub fn render_all(&self, raster: &RasterConfig) -> Vec<LinearImage> {
        self.bundle
            .poses
            .iter()
            .map(|pose| {
                let view = View { camera: self.camera(), pose };
                rasterize_forward(&self.truth, &view, raster).color
            })
            .collect()
    }

    /// Training views over `indices` with their targets.
    pub fn views(&self, targets: &[LinearImage], indices: &[usize]) -> Vec<TrainView> {
        indices
            .iter()
            .map(|&i| TrainView {
                camera: self.camera().clone(),
                pose: self.bundle.poses[i].clone(),
                target: targets[i].clone(),
            })
            .collect()
    }

    /// Every ground-truth center displaced by isotropic Gaussian noise of
    /// standard deviation `jitter`.
    pub fn jittered_seed(&self, jitter: f64, seed: u64) -> SeedCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        seed_from(&self.truth, &vec![true; self.truth.len()], jitter, &mut rng)
    }

    /// A non-uniform seed: each object cluster keeps a different fraction of
    /// its points, one cluster and a patch of the wall are dropped entirely.
    pub fn sparse_seed(&self, jitter: f64, seed: u64) -> SeedCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wall = WALL_COLS * WALL_ROWS;
        let keep_fraction = [0.5, 0.0, 0.25, 0.8, 0.4];
        let keep: Vec<bool> = (0..self.truth.len())
            .map(|i| {
                if i < wall {
                    let [x, y, _] = self.truth.positions[i];
                    let hole = x > -1.5 && x < 2.5 && y > -1.5 && y < 1.5;
                    !hole && rng.random::<f64>() < 0.7
                } else {
                    rng.random::<f64>() < keep_fraction[(i - wall) % CLUSTERS.len()]
                }
            })
            .collect();
        seed_from(&self.truth, &keep, jitter, &mut rng)
    }

    /// Ratio between the brightest and dimmest base radiance in the scene.
    pub fn dynamic_range(&self) -> f64 {
        let levels: Vec<f64> = self
            .truth
            .sh_coeffs
            .iter()
            .map(|sh| sh[0].iter().map(|&d| d * SH_C0 + 0.5).sum::<f64>() / 3.0)
            .collect();
        let max = levels.iter().copied().fold(f64::MIN, f64::max);
        let min = levels.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }
}

fn seed_from(truth: &GaussianCloud, keep: &[bool], jitter: f64, rng: &mut impl Rng) -> SeedCloud {
    let mut seed = SeedCloud::default();
    let normal = Normal::new(0.0, jitter.max(0.0)).expect("non-negative std");
    for i in (0..truth.len()).filter(|&i| keep[i]) {
        let p = truth.positions[i].map(|v| v + rng.sample(normal));
        let rgb = truth.sh_coeffs[i][0].map(|d| ((d * SH_C0 + 0.5).clamp(0.0, 1.0) * 255.0).round() as u8);
        seed.push(i as u64 + 1, p, rgb);
    }
    seed
}

/// Samples the channel each CFA site measures.
pub fn mosaic(img: &LinearImage, cfa: Cfa) -> BayerPlane {
    let mut data = Vec::with_capacity(img.width * img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            data.push(img.pixel(x, y)[cfa.channel_at(x, y)]);
        }
    }
    BayerPlane {
        width: img.width,
        height: img.height,
        cfa,
        data,
    }
}

/// Adds zero-mean noise of variance `k x + sigma2` at every site.
pub fn add_sensor_noise(plane: &BayerPlane, np: &NoiseParams, rng: &mut impl Rng) -> BayerPlane {
    let data = plane
        .data
        .iter()
        .map(|&x| {
            let z: f64 = rng.sample(StandardNormal);
            x + np.std_at(x) * z
        })
        .collect();
    BayerPlane { data, ..plane.clone() }
}

/// Simulated capture of a clean linear image: mosaic, sensor noise, Bayer
/// denoising, bilinear demosaic.
pub fn noisy_capture(img: &LinearImage, cfa: Cfa, np: &NoiseParams, method: DenoiseMethod, seed: u64) -> Result<LinearImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = add_sensor_noise(&mosaic(img, cfa), np, &mut rng);
    Ok(demosaic_bilinear(&denoise(&noisy, method, np)?))
}

/// Quantizes a mosaic into sensor counts between `black_level` and
/// `white_level`; `1.0` maps to the white level.
pub fn to_raw_frame(plane: &BayerPlane, bit_depth: u32, black_level: u16, white_level: u16, np: &NoiseParams) -> Result<RawFrame> {
    let span = (white_level - black_level) as f64;
    let data = plane
        .data
        .iter()
        .map(|&x| (black_level as f64 + x.clamp(0.0, 1.0) * span).round() as u16)
        .collect();
    let frame = RawFrame {
        width: plane.width,
        height: plane.height,
        cfa: plane.cfa,
        bit_depth,
        black_level,
        white_level,
        data,
        iso_gain: 1.0,
        noise_k: np.k,
        noise_sigma2: np.sigma2,
        wb_gains: [1.0; 3],
        ccm: crate::isp::IDENTITY_CCM,
    };
    frame.validate()?;
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scene_shape() {
        let s = SyntheticScene::generate(&SceneSpec::default()).unwrap();
        assert_eq!(s.truth.len(), 300);
        assert_eq!(s.bundle.train_indices.len(), 20);
        assert_eq!(s.bundle.test_indices.len(), 5);
        assert!(s.dynamic_range() >= 1000.0, "{}", s.dynamic_range());
        s.truth.validate().unwrap();
    }

    #[test]
    fn every_pixel_is_lit() {
        let s = SyntheticScene::generate(&SceneSpec::default()).unwrap();
        for img in s.render_all(&RasterConfig::default()) {
            let min = img.data.iter().copied().fold(f64::MAX, f64::min);
            assert!(min > 5e-4, "min {min}");
        }
    }

    #[test]
    fn generation_is_seeded() {
        let spec = SceneSpec { seed: 3, ..Default::default() };
        let a = SyntheticScene::generate(&spec).unwrap();
        let b = SyntheticScene::generate(&spec).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_ne!(a.truth, SyntheticScene::generate(&SceneSpec::default()).unwrap().truth);
    }

    #[test]
    fn sparse_seed_has_holes() {
        let s = SyntheticScene::generate(&SceneSpec::default()).unwrap();
        let sparse = s.sparse_seed(0.0, 1);
        assert!(sparse.len() < s.truth.len() / 2);
        assert!(sparse.len() > 30);
    }

    #[test]
    fn mosaic_then_demosaic_of_constant_is_exact() {
        let img = LinearImage::filled(8, 8, 0.25);
        let back = demosaic_bilinear(&mosaic(&img, Cfa::Rggb));
        assert!(back.data.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn noise_variance_follows_model() {
        let np = NoiseParams::new(0.002, 1e-6).unwrap();
        let plane = BayerPlane { width: 200, height: 200, cfa: Cfa::Rggb, data: vec![0.5; 40_000] };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noisy = add_sensor_noise(&plane, &np, &mut rng);
        let var = noisy.data.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>() / 40_000.0;
        let expect = 0.002 * 0.5 + 1e-6;
        assert!((var / expect - 1.0).abs() < 0.05, "{var} vs {expect}");
    }
}
