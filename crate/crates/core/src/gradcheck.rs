//! Finite-difference verification of the analytic backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::camera::{Camera, PoseRecord};
use crate::error::Result;
use crate::isp::LinearImage;
use crate::render::{rasterize_backward, rasterize_forward, RasterConfig, View};
use crate::scene::{logit, GaussianCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamClass {
    Positions,
    LogScales,
    Quaternions,
    Sh,
    OpacityLogits,
}

impl ParamClass {
    pub const ALL: [ParamClass; 5] = [
        ParamClass::Positions,
        ParamClass::LogScales,
        ParamClass::Quaternions,
        ParamClass::Sh,
        ParamClass::OpacityLogits,
    ];

    fn width(self) -> usize {
        match self {
            ParamClass::Positions | ParamClass::LogScales => 3,
            ParamClass::Quaternions => 4,
            ParamClass::Sh => 48,
            ParamClass::OpacityLogits => 1,
        }
    }

    fn slot(self, cloud: &mut GaussianCloud, i: usize, j: usize) -> &mut f64 {
        match self {
            ParamClass::Positions => &mut cloud.positions[i][j],
            ParamClass::LogScales => &mut cloud.log_scales[i][j],
            ParamClass::Quaternions => &mut cloud.quaternions[i][j],
            ParamClass::Sh => &mut cloud.sh_coeffs[i][j / 3][j % 3],
            ParamClass::OpacityLogits => &mut cloud.opacity_logits[i],
        }
    }

    fn analytic(self, g: &crate::render::ParamGrads, i: usize, j: usize) -> f64 {
        match self {
            ParamClass::Positions => g.positions[i][j],
            ParamClass::LogScales => g.log_scales[i][j],
            ParamClass::Quaternions => g.quaternions[i][j],
            ParamClass::Sh => g.sh[i][j / 3][j % 3],
            ParamClass::OpacityLogits => g.opacity_logits[i],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub class: ParamClass,
    pub count: usize,
    pub max_rel_error: f64,
    pub max_abs_grad: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub classes: Vec<ClassReport>,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.classes.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }
}

/// A scalar objective `sum(weights * color)` and its gradient image.
#[derive(Debug, Clone)]
pub struct Problem {
    pub cloud: GaussianCloud,
    pub camera: Camera,
    pub pose: PoseRecord,
    pub weights: LinearImage,
    pub raster: RasterConfig,
}

/// Relative FD step, multiplied by each class's parameter scale (1 here).
pub const FD_STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-3;
/// Differences below this fraction of a class's largest gradient are
/// measured against that fraction instead of their own magnitude.
pub const REL_FLOOR: f64 = 1e-6;

impl Problem {
    /// `n` Gaussians large enough on a `size`x`size` image that every pixel
    /// sees every splat above the skip threshold, at well separated depths.
    pub fn random(seed: u64, n: usize, size: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = size as f64;
        let camera = Camera::new(1, size, size, f, 0.5 * f, 0.5 * f).expect("valid camera");
        let pose = PoseRecord::look_at(1, 1, "gradcheck", [0.3, -0.2, -6.0], [0.0; 3], [0.0, -1.0, 0.0]);
        let mut cloud = GaussianCloud::default();
        for k in 0..n {
            let depth = -1.5 + 3.0 * (k as f64 + rng.random_range(0.2..0.8)) / n as f64;
            let pos = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), depth];
            let log_scale = [0; 3].map(|_| rng.random_range(5.0f64..7.0).ln());
            let quat = [rng.random_range(0.5..1.0), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            let mut sh = [[0.0; 3]; 16];
            sh[0] = [0; 3].map(|_| rng.random_range(-0.5..0.5));
            for c in sh.iter_mut().skip(1) {
                *c = [0; 3].map(|_| rng.random_range(-0.05..0.05));
            }
            cloud.push(pos, log_scale, quat, sh, logit(rng.random_range(0.2..0.5)));
        }
        let weights = LinearImage::new(size, size, (0..size * size * 3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .expect("sized buffer");
        Problem {
            cloud,
            camera,
            pose,
            weights,
            raster: RasterConfig::default(),
        }
    }

    /// Adds a splat just beyond the near plane, seen at a steep angle.
    pub fn with_near_clip_splat(mut self) -> Self {
        let near = self.raster.near_clip;
        let c = self.pose.center();
        let r = self.pose.rotation();
        let cam_point = nalgebra::Vector3::new(0.03, -0.02, near + 0.15);
        let world = r.transpose() * cam_point + c;
        let mut sh = [[0.0; 3]; 16];
        sh[0] = [0.2, -0.1, 0.3];
        self.cloud.push([world.x, world.y, world.z], [-0.8, -0.7, -0.9], [0.9, 0.3, 0.2, -0.1], sh, logit(0.3));
        self
    }

    pub fn objective(&self, cloud: &GaussianCloud) -> f64 {
        let out = rasterize_forward(cloud, &View::new(&self.camera, &self.pose), &self.raster);
        out.color.data.iter().zip(&self.weights.data).map(|(c, w)| c * w).sum()
    }

    pub fn run(&self) -> Result<GradcheckReport> {
        let view = View::new(&self.camera, &self.pose);
        let fwd = rasterize_forward(&self.cloud, &view, &self.raster);
        let grads = rasterize_backward(&self.cloud, &view, &self.raster, &self.weights, &fwd)?;
        let mut classes = Vec::new();
        for class in ParamClass::ALL {
            let mut pairs = Vec::new();
            let mut cloud = self.cloud.clone();
            for i in 0..cloud.len() {
                for j in 0..class.width() {
                    let orig = *class.slot(&mut cloud, i, j);
                    *class.slot(&mut cloud, i, j) = orig + FD_STEP;
                    let plus = self.objective(&cloud);
                    *class.slot(&mut cloud, i, j) = orig - FD_STEP;
                    let minus = self.objective(&cloud);
                    *class.slot(&mut cloud, i, j) = orig;
                    pairs.push((class.analytic(&grads, i, j), (plus - minus) / (2.0 * FD_STEP)));
                }
            }
            let max_abs_grad = pairs.iter().map(|(a, n)| a.abs().max(n.abs())).fold(0.0, f64::max);
            let floor = (REL_FLOOR * max_abs_grad).max(f64::MIN_POSITIVE);
            let max_rel_error = pairs
                .iter()
                .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
                .fold(0.0, f64::max);
            classes.push(ClassReport {
                class,
                count: pairs.len(),
                max_rel_error,
                max_abs_grad,
            });
        }
        let passed = classes.iter().all(|c| c.max_rel_error < TOLERANCE && c.max_rel_error.is_finite());
        Ok(GradcheckReport {
            classes,
            tolerance: TOLERANCE,
            passed,
        })
    }
}
