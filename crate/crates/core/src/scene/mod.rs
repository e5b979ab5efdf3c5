//! Gaussian cloud parameterization.
//!
//! Parameters are stored pre-activation: scales as logarithms, opacities as
//! logits and rotations as unnormalized quaternions `(w, x, y, z)`.

mod ply;
pub mod sh;

pub use ply::{decode_ply, encode_ply, load_ply, save_ply, PlyPrecision, PLY_FLOATS_PER_VERTEX};

use nalgebra::{Matrix3, Vector3};

use crate::camera::quat_to_matrix;
use crate::colmap::SeedCloud;
use crate::error::{Error, Result};
use sh::{rgb_to_dc, SH_COEFFS};

pub type ShCoeffs = [[f64; 3]; SH_COEFFS];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianCloud {
    pub positions: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub quaternions: Vec<[f64; 4]>,
    /// `sh_coeffs[i][k][channel]`.
    pub sh_coeffs: Vec<ShCoeffs>,
    pub opacity_logits: Vec<f64>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Symmetric 3x3 covariance, upper triangle `(xx, xy, xz, yy, yz, zz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sigma3(pub [f64; 6]);

impl Sigma3 {
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Sigma3([m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 1)], m[(1, 2)], m[(2, 2)]])
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let [xx, xy, xz, yy, yz, zz] = self.0;
        Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
    }
}

/// `R diag(exp(2 s)) R^T` with `R` from the normalized quaternion.
pub fn covariance(log_scale: [f64; 3], quat: [f64; 4]) -> Result<Sigma3> {
    let n2: f64 = quat.iter().map(|v| v * v).sum();
    if !(n2 > 0.0 && n2.is_finite()) {
        return Err(Error::InvalidParameter("zero quaternion".into()));
    }
    Ok(Sigma3::from_matrix(&covariance_matrix(log_scale, quat)))
}

pub(crate) fn covariance_matrix(log_scale: [f64; 3], quat: [f64; 4]) -> Matrix3<f64> {
    let r = quat_to_matrix(quat);
    let m = r * Matrix3::from_diagonal(&Vector3::from(log_scale.map(f64::exp)));
    m * m.transpose()
}

impl GaussianCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, position: [f64; 3], log_scale: [f64; 3], quat: [f64; 4], sh: ShCoeffs, opacity_logit: f64) {
        self.positions.push(position);
        self.log_scales.push(log_scale);
        self.quaternions.push(quat);
        self.sh_coeffs.push(sh);
        self.opacity_logits.push(opacity_logit);
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    pub fn max_scale(&self, i: usize) -> f64 {
        self.log_scales[i].iter().copied().fold(f64::NEG_INFINITY, f64::max).exp()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.log_scales.len() != n
            || self.quaternions.len() != n
            || self.sh_coeffs.len() != n
            || self.opacity_logits.len() != n
        {
            return Err(Error::InvalidParameter("ragged Gaussian parameter arrays".into()));
        }
        let finite = self.positions.iter().flatten().all(|v| v.is_finite())
            && self.log_scales.iter().flatten().all(|v| v.is_finite())
            && self.quaternions.iter().flatten().all(|v| v.is_finite())
            && self.sh_coeffs.iter().flatten().flatten().all(|v| v.is_finite())
            && self.opacity_logits.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite Gaussian parameter".into()));
        }
        if self.quaternions.iter().any(|q| q.iter().all(|&v| v == 0.0)) {
            return Err(Error::InvalidParameter("zero quaternion".into()));
        }
        Ok(())
    }

    /// Keeps the Gaussians whose `keep` flag is set.
    pub fn retain(&mut self, keep: &[bool]) {
        fn filt<T: Copy>(v: &mut Vec<T>, keep: &[bool]) {
            let mut it = keep.iter();
            v.retain(|_| *it.next().unwrap());
        }
        filt(&mut self.positions, keep);
        filt(&mut self.log_scales, keep);
        filt(&mut self.quaternions, keep);
        filt(&mut self.sh_coeffs, keep);
        filt(&mut self.opacity_logits, keep);
    }
}

pub const INIT_OPACITY: f64 = 0.1;
const MIN_INIT_DISTANCE: f64 = 1e-7;

/// Isotropic Gaussians at the seed points, sized by the mean distance to the
/// three nearest neighbours. A single-point cloud uses `fallback_scale`.
pub fn init_from_seed(seed: &SeedCloud, fallback_scale: f64) -> Result<GaussianCloud> {
    seed.validate()?;
    let dists = mean_knn_distance(&seed.positions, 3);
    let mut cloud = GaussianCloud::default();
    for i in 0..seed.len() {
        let d = match dists[i] {
            Some(d) => d.max(MIN_INIT_DISTANCE),
            None => fallback_scale,
        };
        let mut sh = [[0.0; 3]; SH_COEFFS];
        sh[0] = seed.colors[i].map(rgb_to_dc);
        cloud.push(seed.positions[i], [d.ln(); 3], [1.0, 0.0, 0.0, 0.0], sh, logit(INIT_OPACITY));
    }
    Ok(cloud)
}

/// Mean distance to the `k` nearest other points (fewer when the cloud is
/// smaller); `None` for a lone point. Sweep over points sorted by x.
pub(crate) fn mean_knn_distance(points: &[[f64; 3]], k: usize) -> Vec<Option<f64>> {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
    let mut rank = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let k = k.min(n.saturating_sub(1));
    (0..n)
        .map(|i| {
            if k == 0 {
                return None;
            }
            let p = points[i];
            // k smallest squared distances, ascending
            let mut best: Vec<f64> = Vec::with_capacity(k + 1);
            let consider = |j: usize, best: &mut Vec<f64>| {
                let q = points[j];
                let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                if best.len() < k || d2 < best[k - 1] {
                    let pos = best.partition_point(|&b| b <= d2);
                    best.insert(pos, d2);
                    best.truncate(k);
                }
            };
            let r = rank[i];
            let (mut lo, mut hi) = (r, r + 1);
            loop {
                let bound = if best.len() == k { best[k - 1] } else { f64::INFINITY };
                let left = (lo > 0).then(|| (p[0] - points[order[lo - 1]][0]).powi(2)).filter(|&dx| dx <= bound);
                let right = (hi < n).then(|| (points[order[hi]][0] - p[0]).powi(2)).filter(|&dx| dx <= bound);
                match (left, right) {
                    (None, None) => break,
                    (Some(l), Some(rr)) if l <= rr => {
                        lo -= 1;
                        consider(order[lo], &mut best);
                    }
                    (Some(_), None) => {
                        lo -= 1;
                        consider(order[lo], &mut best);
                    }
                    _ => {
                        consider(order[hi], &mut best);
                        hi += 1;
                    }
                }
            }
            Some(best.iter().map(|d2| d2.sqrt()).sum::<f64>() / best.len() as f64)
        })
        .collect()
}
