use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};
use rayon::prelude::*;

use super::forward::RenderOutput;
use super::project::{camera_space, Splat2D};
use super::{RasterConfig, View};
use crate::error::{Error, Result};
use crate::isp::LinearImage;
use crate::scene::sh::{num_coeffs, sh_basis, sh_basis_grad, MAX_SH_DEGREE, SH_OFFSET};
use crate::scene::{GaussianCloud, ShCoeffs};

/// Gradients of a scalar loss with respect to every parameter class, plus
/// the per-view densification statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub positions: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub quaternions: Vec<[f64; 4]>,
    pub sh: Vec<ShCoeffs>,
    pub opacity_logits: Vec<f64>,
    /// `||dL/d mean2d||` in normalized device coordinates.
    pub mean2d_grad_norm: Vec<f64>,
    /// Whether the Gaussian contributed to at least one pixel.
    pub touched: Vec<bool>,
}

impl ParamGrads {
    pub fn zeros(n: usize) -> Self {
        ParamGrads {
            positions: vec![[0.0; 3]; n],
            log_scales: vec![[0.0; 3]; n],
            quaternions: vec![[0.0; 4]; n],
            sh: vec![[[0.0; 3]; 16]; n],
            opacity_logits: vec![0.0; n],
            mean2d_grad_norm: vec![0.0; n],
            touched: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Adds `other` element-wise; densification statistics are not summed.
    pub fn accumulate(&mut self, other: &ParamGrads) {
        for i in 0..self.len() {
            for c in 0..3 {
                self.positions[i][c] += other.positions[i][c];
                self.log_scales[i][c] += other.log_scales[i][c];
            }
            for c in 0..4 {
                self.quaternions[i][c] += other.quaternions[i][c];
            }
            for k in 0..16 {
                for c in 0..3 {
                    self.sh[i][k][c] += other.sh[i][k][c];
                }
            }
            self.opacity_logits[i] += other.opacity_logits[i];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().flatten().all(|v| v.is_finite())
            && self.log_scales.iter().flatten().all(|v| v.is_finite())
            && self.quaternions.iter().flatten().all(|v| v.is_finite())
            && self.sh.iter().flatten().flatten().all(|v| v.is_finite())
            && self.opacity_logits.iter().all(|v| v.is_finite())
    }
}

/// Screen-space gradients of one splat.
#[derive(Debug, Clone, Copy, Default)]
struct SplatGrad {
    mean2d: [f64; 2],
    /// Full-matrix entries `(00, 01, 11)` of `dL/dQ` for the conic `Q`.
    conic: [f64; 3],
    alpha: f64,
    rgb: [f64; 3],
    touched: bool,
}

impl SplatGrad {
    fn add(&mut self, o: &SplatGrad) {
        for c in 0..2 {
            self.mean2d[c] += o.mean2d[c];
        }
        for c in 0..3 {
            self.conic[c] += o.conic[c];
            self.rgb[c] += o.rgb[c];
        }
        self.alpha += o.alpha;
        self.touched |= o.touched;
    }
}

struct Contributor {
    local: usize,
    a: f64,
    g: f64,
    t: f64,
}

/// Back-propagates one pixel. Local indices refer to positions in the
/// tile's splat list.
fn pixel_backward(
    list: &[&Splat2D],
    px: f64,
    py: f64,
    grad: [f64; 3],
    cfg: &RasterConfig,
    scratch: &mut Vec<Contributor>,
    acc: &mut [SplatGrad],
) {
    scratch.clear();
    let mut t = 1.0;
    for (local, s) in list.iter().enumerate() {
        let dx = px - s.mean2d[0];
        let dy = py - s.mean2d[1];
        let [qa, qb, qc] = s.conic;
        let power = -0.5 * (qa * dx * dx + qc * dy * dy) - qb * dx * dy;
        let g = power.exp();
        let a = s.alpha * g;
        if a < cfg.alpha_threshold || a <= 0.0 {
            continue;
        }
        scratch.push(Contributor { local, a, g, t });
        t *= 1.0 - a;
        if t < cfg.transmittance_floor {
            break;
        }
    }
    let mut behind = [0.0; 3];
    for c in scratch.iter().rev() {
        let s = list[c.local];
        let w = c.a * c.t;
        let acc = &mut acc[c.local];
        acc.touched = true;
        let mut dl_da = 0.0;
        for ch in 0..3 {
            acc.rgb[ch] += grad[ch] * w;
            dl_da += grad[ch] * c.t * (s.rgb[ch] - behind[ch]);
            behind[ch] = s.rgb[ch] * c.a + (1.0 - c.a) * behind[ch];
        }
        acc.alpha += dl_da * c.g;
        let dl_dpower = dl_da * c.a;
        let dx = px - s.mean2d[0];
        let dy = py - s.mean2d[1];
        let [qa, qb, qc] = s.conic;
        acc.mean2d[0] += dl_dpower * (qa * dx + qb * dy);
        acc.mean2d[1] += dl_dpower * (qc * dy + qb * dx);
        acc.conic[0] += dl_dpower * (-0.5 * dx * dx);
        acc.conic[1] += dl_dpower * (-0.5 * dx * dy);
        acc.conic[2] += dl_dpower * (-0.5 * dy * dy);
    }
}

/// Analytic gradients of `sum(grad_color * color)` with respect to every
/// Gaussian parameter. `forward` must come from [`super::rasterize_forward`]
/// on the same inputs.
pub fn rasterize_backward(
    cloud: &GaussianCloud,
    view: &View,
    cfg: &RasterConfig,
    grad_color: &LinearImage,
    forward: &RenderOutput,
) -> Result<ParamGrads> {
    let aux = forward
        .aux
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("backward requires forward aux buffers".into()))?;
    let (w, h) = (view.camera.width, view.camera.height);
    if grad_color.width != w || grad_color.height != h {
        return Err(Error::Dimension(format!(
            "gradient image {}x{} vs view {}x{}",
            grad_color.width, grad_color.height, w, h
        )));
    }
    if forward.width() != w || forward.height() != h || forward.radii.len() != cloud.len() {
        return Err(Error::Dimension("forward output does not match this view".into()));
    }
    let tile = cfg.tile_size.max(1);
    let splats = &aux.splats;

    let per_tile: Vec<Vec<SplatGrad>> = (0..aux.tiles_x * aux.tiles_y)
        .into_par_iter()
        .map(|t| {
            let (tx, ty) = (t % aux.tiles_x, t / aux.tiles_x);
            let list: Vec<&Splat2D> = aux.tile_lists[t].iter().map(|&k| &splats[k as usize]).collect();
            let mut acc = vec![SplatGrad::default(); list.len()];
            if list.is_empty() {
                return acc;
            }
            let mut scratch = Vec::new();
            for y in ty * tile..((ty + 1) * tile).min(h) {
                for x in tx * tile..((tx + 1) * tile).min(w) {
                    let g = grad_color.pixel(x, y);
                    if g == [0.0; 3] {
                        continue;
                    }
                    pixel_backward(&list, x as f64 + 0.5, y as f64 + 0.5, g, cfg, &mut scratch, &mut acc);
                }
            }
            acc
        })
        .collect();

    let mut screen = vec![SplatGrad::default(); splats.len()];
    for (t, acc) in per_tile.iter().enumerate() {
        for (local, g) in acc.iter().enumerate() {
            screen[aux.tile_lists[t][local] as usize].add(g);
        }
    }

    let center = view.pose.center();
    let rot = view.pose.rotation();
    let per_splat: Vec<(usize, SplatParamGrad)> = splats
        .par_iter()
        .zip(screen.par_iter())
        .filter(|(_, g)| g.touched)
        .map(|(s, g)| (s.source_index, splat_to_params(cloud, s, g, view, cfg, &rot, &center)))
        .collect();

    let mut out = ParamGrads::zeros(cloud.len());
    for (i, g) in per_splat {
        out.positions[i] = g.position;
        out.log_scales[i] = g.log_scale;
        out.quaternions[i] = g.quat;
        out.sh[i] = g.sh;
        out.opacity_logits[i] = g.opacity_logit;
        out.mean2d_grad_norm[i] = g.ndc_norm;
        out.touched[i] = true;
    }
    Ok(out)
}

struct SplatParamGrad {
    position: [f64; 3],
    log_scale: [f64; 3],
    quat: [f64; 4],
    sh: ShCoeffs,
    opacity_logit: f64,
    ndc_norm: f64,
}

fn splat_to_params(
    cloud: &GaussianCloud,
    s: &Splat2D,
    g: &SplatGrad,
    view: &View,
    cfg: &RasterConfig,
    rot: &Matrix3<f64>,
    center: &Vector3<f64>,
) -> SplatParamGrad {
    let i = s.source_index;
    let cam = view.camera;
    let proj = camera_space(cloud, i, view, cfg).expect("projected splat has a camera-space mean");
    let t = proj.t;
    let f = cam.f;

    // color
    let mu = Vector3::from(cloud.positions[i]);
    let v = mu - center;
    let vn = v.norm();
    let dir = [v.x / vn, v.y / vn, v.z / vn];
    let degree = cfg.sh_degree.min(MAX_SH_DEGREE);
    let coeffs = &cloud.sh_coeffs[i];
    let basis = sh_basis(dir, degree);
    let nc = num_coeffs(degree);
    let mut g_rgb = g.rgb;
    for ch in 0..3 {
        let mut raw = SH_OFFSET;
        for k in 0..nc {
            raw += basis[k] * coeffs[k][ch];
        }
        if raw < 0.0 {
            g_rgb[ch] = 0.0;
        }
    }
    let mut sh = [[0.0; 3]; 16];
    for k in 0..nc {
        for ch in 0..3 {
            sh[k][ch] = g_rgb[ch] * basis[k];
        }
    }
    let mut g_dir = Vector3::zeros();
    if degree > 0 {
        let bgrad = sh_basis_grad(dir, degree);
        for k in 1..nc {
            let dk: f64 = (0..3).map(|ch| g_rgb[ch] * coeffs[k][ch]).sum();
            g_dir += Vector3::from(bgrad[k]) * dk;
        }
    }
    let dn = Vector3::from(dir);
    let g_mu_color = (g_dir - dn * dn.dot(&g_dir)) / vn;

    // opacity
    let opacity_logit = g.alpha * s.alpha * (1.0 - s.alpha);

    // conic -> 2D covariance
    let q = Matrix2::new(s.conic[0], s.conic[1], s.conic[1], s.conic[2]);
    let g_q = Matrix2::new(g.conic[0], g.conic[1], g.conic[1], g.conic[2]);
    let g_m = -(q * g_q * q);

    // 2D covariance -> camera covariance and Jacobian
    let jac = proj.jac;
    let g_sigma_cam = jac.transpose() * g_m * jac;
    let g_jac: Matrix2x3<f64> = 2.0 * g_m * jac * proj.sigma_cam;

    // camera covariance -> world covariance -> (R, S)
    let g_sigma = rot.transpose() * g_sigma_cam * rot;
    let qv = cloud.quaternions[i];
    let r = crate::camera::quat_to_matrix(qv);
    let scales = Vector3::from(cloud.log_scales[i].map(f64::exp));
    let m3 = r * Matrix3::from_diagonal(&scales);
    let g_m3 = 2.0 * g_sigma * m3;
    let mut log_scale = [0.0; 3];
    for j in 0..3 {
        let mut acc = 0.0;
        for row in 0..3 {
            acc += g_m3[(row, j)] * r[(row, j)];
        }
        log_scale[j] = scales[j] * acc;
    }
    let mut g_r = g_m3;
    for j in 0..3 {
        for row in 0..3 {
            g_r[(row, j)] *= scales[j];
        }
    }
    let quat = quat_grad(qv, &g_r);

    // mean: screen position and Jacobian both depend on t
    let (iz, iz2, iz3) = (1.0 / t.z, 1.0 / (t.z * t.z), 1.0 / (t.z * t.z * t.z));
    let [gmx, gmy] = g.mean2d;
    let mut g_t = Vector3::new(f * iz * gmx, f * iz * gmy, -f * t.x * iz2 * gmx - f * t.y * iz2 * gmy);
    g_t.z += g_jac[(0, 0)] * (-f * iz2) + g_jac[(1, 1)] * (-f * iz2);
    g_t.x += g_jac[(0, 2)] * (-f * iz2);
    g_t.z += g_jac[(0, 2)] * (2.0 * f * t.x * iz3);
    g_t.y += g_jac[(1, 2)] * (-f * iz2);
    g_t.z += g_jac[(1, 2)] * (2.0 * f * t.y * iz3);
    let g_mu = rot.transpose() * g_t + g_mu_color;

    let ndc = [gmx * 0.5 * cam.width as f64, gmy * 0.5 * cam.height as f64];
    SplatParamGrad {
        position: [g_mu.x, g_mu.y, g_mu.z],
        log_scale,
        quat,
        sh,
        opacity_logit,
        ndc_norm: (ndc[0] * ndc[0] + ndc[1] * ndc[1]).sqrt(),
    }
}

/// Chain rule from `dL/dR` through the normalized quaternion.
fn quat_grad(q: [f64; 4], g: &Matrix3<f64>) -> [f64; 4] {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    let gg = |r: usize, c: usize| g[(r, c)];
    let dw = 2.0 * (-z * gg(0, 1) + y * gg(0, 2) + z * gg(1, 0) - x * gg(1, 2) - y * gg(2, 0) + x * gg(2, 1));
    let dx = 2.0
        * (y * gg(0, 1) + z * gg(0, 2) + y * gg(1, 0) - 2.0 * x * gg(1, 1) - w * gg(1, 2) + z * gg(2, 0) + w * gg(2, 1)
            - 2.0 * x * gg(2, 2));
    let dy = 2.0
        * (-2.0 * y * gg(0, 0) + x * gg(0, 1) + w * gg(0, 2) + x * gg(1, 0) + z * gg(1, 2) - w * gg(2, 0) + z * gg(2, 1)
            - 2.0 * y * gg(2, 2));
    let dz = 2.0
        * (-2.0 * z * gg(0, 0) - w * gg(0, 1) + x * gg(0, 2) + w * gg(1, 0) - 2.0 * z * gg(1, 1) + y * gg(1, 2) + x * gg(2, 0)
            + y * gg(2, 1));
    let gn = [dw, dx, dy, dz];
    let qn = [w, x, y, z];
    let dot: f64 = gn.iter().zip(&qn).map(|(a, b)| a * b).sum();
    [0, 1, 2, 3].map(|k| (gn[k] - qn[k] * dot) / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Camera, PoseRecord};
    use crate::render::rasterize_forward;
    use crate::scene::logit;

    fn scene() -> (GaussianCloud, Camera, PoseRecord) {
        let cam = Camera::new(1, 32, 32, 30.0, 16.0, 16.0).unwrap();
        let pose = PoseRecord::look_at(1, 1, "v", [0.0, 0.0, -3.0], [0.0; 3], [0.0, -1.0, 0.0]);
        let mut cloud = GaussianCloud::default();
        cloud.push([0.1, 0.0, 0.0], [-1.0; 3], [1.0, 0.2, 0.1, 0.0], [[0.3; 3]; 16], logit(0.4));
        cloud.push([50.0, 0.0, 0.0], [-1.0; 3], [1.0, 0.0, 0.0, 0.0], [[0.3; 3]; 16], logit(0.4));
        (cloud, cam, pose)
    }

    #[test]
    fn zero_gradient_image_gives_zero_grads() {
        let (cloud, cam, pose) = scene();
        let view = View::new(&cam, &pose);
        let cfg = RasterConfig::default();
        let fwd = rasterize_forward(&cloud, &view, &cfg);
        let g = rasterize_backward(&cloud, &view, &cfg, &LinearImage::zeros(32, 32), &fwd).unwrap();
        assert_eq!(g, ParamGrads::zeros(2));
    }

    #[test]
    fn missing_aux_is_an_error() {
        let (cloud, cam, pose) = scene();
        let view = View::new(&cam, &pose);
        let cfg = RasterConfig::default();
        let mut fwd = rasterize_forward(&cloud, &view, &cfg);
        fwd.aux = None;
        assert!(rasterize_backward(&cloud, &view, &cfg, &LinearImage::filled(32, 32, 1.0), &fwd).is_err());
    }

    #[test]
    fn off_screen_gaussian_gets_nothing() {
        let (cloud, cam, pose) = scene();
        let view = View::new(&cam, &pose);
        let cfg = RasterConfig::default();
        let fwd = rasterize_forward(&cloud, &view, &cfg);
        let g = rasterize_backward(&cloud, &view, &cfg, &LinearImage::filled(32, 32, 1.0), &fwd).unwrap();
        assert!(g.touched[0] && !g.touched[1]);
        assert_eq!(g.positions[1], [0.0; 3]);
        assert_eq!(g.mean2d_grad_norm[1], 0.0);
        assert!(g.positions[0].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn quaternion_gradient_matches_finite_difference() {
        let q = [0.9, 0.3, -0.2, 0.4];
        let g = Matrix3::new(0.3, -0.1, 0.5, 0.2, 0.7, -0.4, 0.1, 0.05, -0.6);
        let f = |q: [f64; 4]| crate::camera::quat_to_matrix(q).component_mul(&g).sum();
        let an = quat_grad(q, &g);
        for k in 0..4 {
            let (mut p, mut m) = (q, q);
            p[k] += 1e-6;
            m[k] -= 1e-6;
            let num = (f(p) - f(m)) / 2e-6;
            assert!((num - an[k]).abs() < 1e-8, "{k}: {num} vs {}", an[k]);
        }
    }
}
