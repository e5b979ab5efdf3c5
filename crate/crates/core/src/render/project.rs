use nalgebra::{Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;

use super::{RasterConfig, View};
use crate::scene::sh::eval_sh;
use crate::scene::{covariance_matrix, sigmoid, GaussianCloud};

/// Screen-space footprint of one Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat2D {
    /// Pixel coordinates; pixel `(x, y)` has its center at `(x + 0.5, y + 0.5)`.
    pub mean2d: [f64; 2],
    /// Projected covariance `(xx, xy, yy)` including the low-pass term.
    pub cov2d: [f64; 3],
    /// Inverse of `cov2d`, same layout.
    pub conic: [f64; 3],
    /// Camera-space z.
    pub depth: f64,
    pub rgb: [f64; 3],
    pub alpha: f64,
    /// `ceil(3 * sqrt(lambda_max))`, at least 1.
    pub radius: u32,
    /// Distance beyond which `alpha * G` is certainly under the skip
    /// threshold; infinite when nothing is skipped.
    pub reach: f64,
    pub source_index: usize,
}

impl Splat2D {
    /// `alpha * G'(r)` at pixel position `(px, py)`.
    #[inline]
    pub fn weight_at(&self, px: f64, py: f64) -> f64 {
        let dx = px - self.mean2d[0];
        let dy = py - self.mean2d[1];
        let [a, b, c] = self.conic;
        let power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy;
        self.alpha * power.exp()
    }
}

/// Camera-space mean, rotated covariance and projection Jacobian.
pub(crate) struct Projection {
    pub t: Vector3<f64>,
    pub sigma_cam: Matrix3<f64>,
    pub jac: Matrix2x3<f64>,
}

pub(crate) fn camera_space(cloud: &GaussianCloud, i: usize, view: &View, cfg: &RasterConfig) -> Option<Projection> {
    let w = view.pose.rotation();
    let t = w * Vector3::from(cloud.positions[i]) + view.pose.translation();
    if t.z <= cfg.near_clip {
        return None;
    }
    let f = view.camera.f;
    let (iz, iz2) = (1.0 / t.z, 1.0 / (t.z * t.z));
    let jac = Matrix2x3::new(f * iz, 0.0, -f * t.x * iz2, 0.0, f * iz, -f * t.y * iz2);
    let sigma = covariance_matrix(cloud.log_scales[i], cloud.quaternions[i]);
    let sigma_cam = w * sigma * w.transpose();
    Some(Projection { t, sigma_cam, jac })
}

pub fn project_one(cloud: &GaussianCloud, i: usize, view: &View, cfg: &RasterConfig) -> Option<Splat2D> {
    let p = camera_space(cloud, i, view, cfg)?;
    let cam = view.camera;
    let m = p.jac * p.sigma_cam * p.jac.transpose();
    let (a, b, c) = (m[(0, 0)] + cfg.lowpass, m[(0, 1)], m[(1, 1)] + cfg.lowpass);
    let det = a * c - b * b;
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let conic = [c / det, -b / det, a / det];
    let mid = 0.5 * (a + c);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    let radius = ((3.0 * lambda_max.sqrt()).ceil() as u32).max(1);
    let alpha = sigmoid(cloud.opacity_logits[i]);
    let reach = if cfg.alpha_threshold <= 0.0 {
        f64::INFINITY
    } else if alpha < cfg.alpha_threshold {
        return None;
    } else {
        (2.0 * (alpha / cfg.alpha_threshold).ln() * lambda_max).sqrt() + 1.0
    };
    let mu = Vector3::from(cloud.positions[i]);
    let dir = (mu - view.pose.center()).normalize();
    let rgb = eval_sh(&cloud.sh_coeffs[i], [dir.x, dir.y, dir.z], cfg.sh_degree);
    Some(Splat2D {
        mean2d: [cam.f * p.t.x / p.t.z + cam.cx, cam.f * p.t.y / p.t.z + cam.cy],
        cov2d: [a, b, c],
        conic,
        depth: p.t.z,
        rgb,
        alpha,
        radius,
        reach,
        source_index: i,
    })
}

/// Projects every Gaussian; culled ones are omitted. Output is in index order.
pub fn project(cloud: &GaussianCloud, view: &View, cfg: &RasterConfig) -> Vec<Splat2D> {
    (0..cloud.len())
        .into_par_iter()
        .filter_map(|i| project_one(cloud, i, view, cfg))
        .collect()
}
