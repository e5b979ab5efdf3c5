//! Training losses in linear HDR space and evaluation metrics.

mod metrics;
mod ssim;

pub use metrics::{darkest_fraction_mask, evaluate_protocol, masked_psnr, psnr, psnr_values, serialize_db, EvalMetrics};
pub use ssim::SsimParams;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isp::{LdrImage, LinearImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// `lambda * |y - t| / (sg(y) + eps) + (1 - lambda) * DSSIM`.
    HdrL1Dssim,
    /// `(y - t)^2 / (sg(y) + eps)^2`.
    RawnerfL2,
    /// `lambda * |y - t| + (1 - lambda) * DSSIM`, with no per-pixel scaling.
    PlainL1Dssim,
}

impl LossMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::HdrL1Dssim => "hdr_l1_dssim",
            LossMode::RawnerfL2 => "rawnerf_l2",
            LossMode::PlainL1Dssim => "plain_l1_dssim",
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hdr_l1_dssim" => Ok(LossMode::HdrL1Dssim),
            "rawnerf_l2" => Ok(LossMode::RawnerfL2),
            "plain_l1_dssim" => Ok(LossMode::PlainL1Dssim),
            other => Err(Error::InvalidParameter(format!("unknown loss mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda: f64,
    pub epsilon: f64,
    pub mode: LossMode,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
    pub ssim_c1: f64,
    pub ssim_c2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.8,
            epsilon: 1e-3,
            mode: LossMode::HdrL1Dssim,
            ssim_window: 11,
            ssim_sigma: 1.5,
            ssim_c1: 0.01 * 0.01,
            ssim_c2: 0.03 * 0.03,
        }
    }
}

impl LossConfig {
    pub fn with_mode(mut self, mode: LossMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn ssim_params(&self) -> SsimParams {
        SsimParams {
            window: self.ssim_window,
            sigma: self.ssim_sigma,
            c1: self.ssim_c1,
            c2: self.ssim_c2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon {} must be positive", self.epsilon)));
        }
        if self.ssim_window == 0 || !(self.ssim_sigma > 0.0) {
            return Err(Error::InvalidParameter("invalid SSIM window".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    /// Scaled L1, plain L1 or scaled L2, depending on the mode.
    pub l1_term: f64,
    /// Zero in `rawnerf_l2` mode.
    pub dssim_term: f64,
    /// `dL/dpred`.
    pub grad: LinearImage,
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("epsilon {eps} must be positive")))
    }
}

/// Elementwise `f(pred, target, denominator)` mean and gradient, where the
/// denominator is `max(sg(denom_source), 0) + eps`.
fn reduce(
    pred: &LinearImage,
    target: &LinearImage,
    denom_source: &LinearImage,
    eps: f64,
    f: impl Fn(f64, f64) -> (f64, f64),
) -> Result<(f64, LinearImage)> {
    pred.same_shape(target)?;
    pred.same_shape(denom_source)?;
    check_eps(eps)?;
    let n = pred.data.len().max(1) as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.data.len());
    for ((&y, &t), &d) in pred.data.iter().zip(&target.data).zip(&denom_source.data) {
        let (v, g) = f(y - t, d.max(0.0) + eps);
        value += v;
        grad.push(g / n);
    }
    Ok((value / n, LinearImage::new(pred.width, pred.height, grad)?))
}

/// `mean(|y - t| / (sg(y) + eps))` and its gradient with the denominator held fixed.
pub fn scaled_l1(pred: &LinearImage, target: &LinearImage, eps: f64) -> Result<(f64, LinearImage)> {
    scaled_l1_with_denominator(pred, target, pred, eps)
}

/// [`scaled_l1`] with the stop-gradient copy of the prediction supplied separately.
pub fn scaled_l1_with_denominator(
    pred: &LinearImage,
    target: &LinearImage,
    denom: &LinearImage,
    eps: f64,
) -> Result<(f64, LinearImage)> {
    reduce(pred, target, denom, eps, |d, den| (d.abs() / den, sign(d) / den))
}

/// `mean((y - t)^2 / (sg(y) + eps)^2)` and its gradient.
pub fn scaled_l2(pred: &LinearImage, target: &LinearImage, eps: f64) -> Result<(f64, LinearImage)> {
    scaled_l2_with_denominator(pred, target, pred, eps)
}

pub fn scaled_l2_with_denominator(
    pred: &LinearImage,
    target: &LinearImage,
    denom: &LinearImage,
    eps: f64,
) -> Result<(f64, LinearImage)> {
    reduce(pred, target, denom, eps, |d, den| {
        let inv = 1.0 / (den * den);
        (d * d * inv, 2.0 * d * inv)
    })
}

/// `mean(|y - t|)` and its gradient.
pub fn plain_l1(pred: &LinearImage, target: &LinearImage) -> Result<(f64, LinearImage)> {
    pred.same_shape(target)?;
    let n = pred.data.len().max(1) as f64;
    let mut value = 0.0;
    let grad = pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(y, t)| {
            value += (y - t).abs();
            sign(y - t) / n
        })
        .collect();
    Ok((value / n, LinearImage::new(pred.width, pred.height, grad)?))
}

#[inline]
fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean SSIM over channels on inputs clamped to `[0, 1]`, and its gradient.
pub fn ssim(pred: &LinearImage, target: &LinearImage, params: &SsimParams) -> Result<(f64, LinearImage)> {
    pred.same_shape(target)?;
    let (v, g) = ssim::ssim_impl(&pred.data, &target.data, pred.width, pred.height, params, true)?;
    Ok((v, LinearImage::new(pred.width, pred.height, g.expect("gradient requested"))?))
}

/// SSIM value of two display images.
pub fn ssim_ldr(pred: &LdrImage, target: &LdrImage, params: &SsimParams) -> Result<f64> {
    pred.same_shape(target)?;
    Ok(ssim::ssim_impl(&pred.data, &target.data, pred.width, pred.height, params, false)?.0)
}

pub fn total_loss(pred: &LinearImage, target: &LinearImage, cfg: &LossConfig) -> Result<LossReport> {
    cfg.validate()?;
    let data = match cfg.mode {
        LossMode::HdrL1Dssim => scaled_l1(pred, target, cfg.epsilon)?,
        LossMode::PlainL1Dssim => plain_l1(pred, target)?,
        LossMode::RawnerfL2 => {
            let (v, grad) = scaled_l2(pred, target, cfg.epsilon)?;
            return Ok(LossReport {
                total: v,
                l1_term: v,
                dssim_term: 0.0,
                grad,
            });
        }
    };
    let (l1, g1) = data;
    let lambda = cfg.lambda;
    let (dssim, g2) = if lambda < 1.0 {
        let (s, gs) = ssim(pred, target, &cfg.ssim_params())?;
        ((1.0 - s) / 2.0, Some(gs))
    } else {
        (0.0, None)
    };
    let mut grad = g1;
    for v in grad.data.iter_mut() {
        *v *= lambda;
    }
    if let Some(gs) = g2 {
        for (v, s) in grad.data.iter_mut().zip(&gs.data) {
            *v -= (1.0 - lambda) * 0.5 * s;
        }
    }
    Ok(LossReport {
        total: lambda * l1 + (1.0 - lambda) * dssim,
        l1_term: l1,
        dssim_term: dssim,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn img(w: usize, h: usize, v: &[f64]) -> LinearImage {
        LinearImage::new(w, h, v.to_vec()).unwrap()
    }

    fn random(seed: u64, w: usize, h: usize, lo: f64, hi: f64) -> LinearImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        LinearImage::new(w, h, (0..w * h * 3).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    }

    #[test]
    fn scaled_l1_hand_value() {
        let p = img(1, 1, &[2.0, 2.0, 2.0]);
        let t = img(1, 1, &[1.0, 1.0, 1.0]);
        let (v, g) = scaled_l1(&p, &t, 1e-3).unwrap();
        assert!((v - 1.0 / 2.001).abs() < 1e-12);
        // mean over three channels
        assert!((g.data[0] * 3.0 - 1.0 / 2.001).abs() < 1e-12);
        let (z, gz) = scaled_l1(&p, &p, 1e-3).unwrap();
        assert_eq!(z, 0.0);
        assert!(gz.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaled_l1_joint_doubling_identity() {
        let p = random(1, 4, 4, 0.0, 2.0);
        let t = random(2, 4, 4, 0.0, 2.0);
        let eps = 1e-3;
        let scale = |im: &LinearImage| LinearImage::new(im.width, im.height, im.data.iter().map(|v| 2.0 * v).collect()).unwrap();
        for i in 0..p.data.len() {
            let pi = img(1, 1, &[p.data[i]; 3]);
            let ti = img(1, 1, &[t.data[i]; 3]);
            let (v1, _) = scaled_l1(&pi, &ti, eps).unwrap();
            let (v2, _) = scaled_l1(&scale(&pi), &scale(&ti), eps).unwrap();
            let expected = v1 * (p.data[i] + eps) / (2.0 * p.data[i] + eps);
            assert!((v2 - 2.0 * expected).abs() < 1e-12 * (1.0 + v2));
        }
    }

    #[test]
    fn scaled_l2_hand_value_and_sign() {
        let p = img(1, 1, &[2.0, 0.5, 1.0]);
        let t = img(1, 1, &[1.0, 1.0, 1.0]);
        let (v, g) = scaled_l2(&p, &t, 1e-3).unwrap();
        let expected = (1.0 / (2.001f64 * 2.001) + 0.25 / (0.501f64 * 0.501)) / 3.0;
        assert!((v - expected).abs() < 1e-12);
        assert!(g.data[0] > 0.0 && g.data[1] < 0.0 && g.data[2] == 0.0);
        let single = scaled_l2(&img(1, 1, &[2.0; 3]), &t, 1e-3).unwrap().0;
        assert!((single - 0.24975).abs() < 1e-5);
    }

    #[test]
    fn stop_gradient_denominator_does_not_move_gradient() {
        let p = random(3, 4, 4, 0.1, 1.0);
        let t = random(4, 4, 4, 0.1, 1.0);
        let (_, g) = scaled_l1(&p, &t, 1e-3).unwrap();
        // perturbing only the numerator copy: the reported gradient is the
        // derivative of the frozen-denominator objective
        for i in [0, 7, 20] {
            let h = 1e-7;
            let mut pp = p.clone();
            pp.data[i] += h;
            let mut pm = p.clone();
            pm.data[i] -= h;
            let vp = scaled_l1_with_denominator(&pp, &t, &p, 1e-3).unwrap().0;
            let vm = scaled_l1_with_denominator(&pm, &t, &p, 1e-3).unwrap().0;
            assert!(((vp - vm) / (2.0 * h) - g.data[i]).abs() < 1e-6);
            let (_, gd) = scaled_l1_with_denominator(&p, &t, &pp, 1e-3).unwrap();
            assert_eq!(gd.data[i + 1], g.data[i + 1]);
        }
    }

    #[test]
    fn dark_pixels_weigh_more() {
        let e = 0.01;
        let mut last = f64::INFINITY;
        for y in [0.001, 0.01, 0.1, 1.0, 10.0] {
            let v = scaled_l1(&img(1, 1, &[y; 3]), &img(1, 1, &[y - e; 3]), 1e-3).unwrap().0;
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let t = random(5, 24, 24, 0.0, 1.0);
        let p = SsimParams::default();
        assert!((ssim(&t, &t, &p).unwrap().0 - 1.0).abs() < 1e-12);
        let inv = LinearImage::new(24, 24, t.data.iter().map(|v| 1.0 - v).collect()).unwrap();
        assert!(ssim(&inv, &t, &p).unwrap().0 < 0.2);
        assert!(ssim(&random(5, 8, 8, 0.0, 1.0), &random(6, 8, 8, 0.0, 1.0), &p).is_err());
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let p = random(7, 16, 16, 0.05, 0.95);
        let t = random(8, 16, 16, 0.05, 0.95);
        let params = SsimParams::default();
        let (_, g) = ssim(&p, &t, &params).unwrap();
        let max_g = g.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in (0..p.data.len()).step_by(5) {
            let h = 1e-4;
            let mut pp = p.clone();
            pp.data[i] += h;
            let mut pm = p.clone();
            pm.data[i] -= h;
            let num = (ssim(&pp, &t, &params).unwrap().0 - ssim(&pm, &t, &params).unwrap().0) / (2.0 * h);
            let rel = (num - g.data[i]).abs() / num.abs().max(g.data[i].abs()).max(1e-6 * max_g);
            assert!(rel < 1e-4, "{i}: {num} vs {}", g.data[i]);
        }
    }

    #[test]
    fn total_loss_components() {
        let p = random(9, 16, 16, 0.0, 1.0);
        let t = random(10, 16, 16, 0.0, 1.0);
        let cfg = LossConfig::default();
        let r = total_loss(&p, &t, &cfg).unwrap();
        let l1 = scaled_l1(&p, &t, cfg.epsilon).unwrap().0;
        let d = (1.0 - ssim(&p, &t, &cfg.ssim_params()).unwrap().0) / 2.0;
        assert!((r.l1_term - l1).abs() < 1e-15 && (r.dssim_term - d).abs() < 1e-15);
        assert!((r.total - (0.8 * l1 + 0.2 * d)).abs() < 1e-12);

        let only_l1 = LossConfig { lambda: 1.0, ..cfg.clone() };
        let r1 = total_loss(&p, &t, &only_l1).unwrap();
        let (v, g) = scaled_l1(&p, &t, cfg.epsilon).unwrap();
        assert_eq!(r1.total, v);
        assert_eq!(r1.grad, g);

        for mode in [LossMode::HdrL1Dssim, LossMode::RawnerfL2, LossMode::PlainL1Dssim] {
            assert_eq!(total_loss(&t, &t, &cfg.clone().with_mode(mode)).unwrap().total, 0.0);
        }
    }

    #[test]
    fn total_loss_gradient_matches_finite_differences() {
        let p = random(11, 12, 12, 0.05, 0.9);
        let t = random(12, 12, 12, 0.05, 0.9);
        for mode in [LossMode::HdrL1Dssim, LossMode::RawnerfL2, LossMode::PlainL1Dssim] {
            let cfg = LossConfig::default().with_mode(mode);
            let r = total_loss(&p, &t, &cfg).unwrap();
            for i in (0..p.data.len()).step_by(7) {
                // frozen denominator: perturb the numerator only
                let h = 1e-7;
                let f = |d: f64| {
                    let mut q = p.clone();
                    q.data[i] += d;
                    let data = match mode {
                        LossMode::HdrL1Dssim => scaled_l1_with_denominator(&q, &t, &p, cfg.epsilon).unwrap().0,
                        LossMode::RawnerfL2 => scaled_l2_with_denominator(&q, &t, &p, cfg.epsilon).unwrap().0,
                        LossMode::PlainL1Dssim => plain_l1(&q, &t).unwrap().0,
                    };
                    if mode == LossMode::RawnerfL2 {
                        data
                    } else {
                        let s = ssim(&q, &t, &cfg.ssim_params()).unwrap().0;
                        cfg.lambda * data + (1.0 - cfg.lambda) * (1.0 - s) / 2.0
                    }
                };
                let num = (f(h) - f(-h)) / (2.0 * h);
                assert!((num - r.grad.data[i]).abs() < 1e-6 * (1.0 + num.abs()), "{mode:?} {i}");
            }
        }
    }

    #[test]
    fn mismatched_shapes_rejected() {
        assert!(scaled_l1(&random(1, 2, 2, 0.0, 1.0), &random(1, 3, 2, 0.0, 1.0), 1e-3).is_err());
        assert!(scaled_l1(&random(1, 2, 2, 0.0, 1.0), &random(1, 2, 2, 0.0, 1.0), 0.0).is_err());
    }

    proptest! {
        #[test]
        fn losses_nonnegative(seed in 0u64..1000) {
            let p = random(seed, 12, 12, -0.05, 3.0);
            let t = random(seed + 1, 12, 12, -0.05, 3.0);
            for mode in [LossMode::HdrL1Dssim, LossMode::RawnerfL2, LossMode::PlainL1Dssim] {
                let r = total_loss(&p, &t, &LossConfig::default().with_mode(mode)).unwrap();
                prop_assert!(r.total >= 0.0 && r.total.is_finite());
            }
        }
    }
}
