use serde::{Serialize, Serializer};

use super::ssim::{ssim_impl, SsimParams};
use crate::error::{Error, Result};
use crate::isp::{fit_color_correction, tonemap, LdrImage, LinearImage, ToneParams};

/// Writes infinite values as the string `"inf"`, since JSON has no infinity.
pub fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

/// `-10 log10(MSE / peak^2)` over paired values; `+inf` when MSE is 0.
pub fn psnr_values(pred: &[f64], reference: &[f64], peak: f64) -> Result<f64> {
    if pred.len() != reference.len() || pred.is_empty() {
        return Err(Error::Dimension(format!("{} vs {} values", pred.len(), reference.len())));
    }
    let mse = pred.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    })
}

/// PSNR with data range 1.
pub fn psnr(pred: &LdrImage, reference: &LdrImage) -> Result<f64> {
    pred.same_shape(reference)?;
    psnr_values(&pred.data, &reference.data, 1.0)
}

/// PSNR over the pixels where `mask` is set (all three channels), with the
/// given peak.
pub fn masked_psnr(pred: &LinearImage, reference: &LinearImage, mask: &[bool], peak: f64) -> Result<f64> {
    pred.same_shape(reference)?;
    if mask.len() != pred.width * pred.height {
        return Err(Error::Dimension("mask size".into()));
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        a.extend_from_slice(&pred.data[i * 3..i * 3 + 3]);
        b.extend_from_slice(&reference.data[i * 3..i * 3 + 3]);
    }
    psnr_values(&a, &b, peak)
}

/// Marks the `fraction` of pixels with the lowest mean channel value; ties
/// are broken by pixel index.
pub fn darkest_fraction_mask(img: &LinearImage, fraction: f64) -> Vec<bool> {
    let n = img.width * img.height;
    let level = |i: usize| img.data[i * 3..i * 3 + 3].iter().sum::<f64>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| level(a).total_cmp(&level(b)).then(a.cmp(&b)));
    let take = ((n as f64 * fraction.clamp(0.0, 1.0)).round() as usize).min(n);
    let mut mask = vec![false; n];
    for &i in &order[..take] {
        mask[i] = true;
    }
    mask
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalMetrics {
    #[serde(serialize_with = "serialize_db")]
    pub psnr: f64,
    pub ssim: f64,
    /// PSNR of the tonemapped render before color correction.
    #[serde(serialize_with = "serialize_db")]
    pub psnr_uncorrected: f64,
}

/// Tonemaps `render_hdr`, color-corrects it against `gt_ldr` and reports
/// PSNR and SSIM of the corrected image.
pub fn evaluate_protocol(render_hdr: &LinearImage, gt_ldr: &LdrImage, tp: &ToneParams) -> Result<EvalMetrics> {
    let ldr = tonemap(render_hdr, tp)?;
    ldr.same_shape(gt_ldr)?;
    let gt = gt_ldr;
    let corrected = fit_color_correction(&ldr, gt)?.corrected;
    let psnr_uncorrected = psnr(&ldr, gt)?;
    let psnr_corrected = psnr(&corrected, gt)?;
    let params = SsimParams::default();
    let ssim = ssim_impl(&corrected.data, &gt.data, gt.width, gt.height, &params, false)?.0;
    Ok(EvalMetrics {
        psnr: psnr_corrected,
        ssim,
        psnr_uncorrected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn darkest_decile_picks_lowest_pixels() {
        let data: Vec<f64> = (0..20).flat_map(|i| [(19 - i) as f64; 3]).collect();
        let img = LinearImage::new(5, 4, data).unwrap();
        let mask = darkest_fraction_mask(&img, 0.1);
        assert_eq!(mask.iter().filter(|m| **m).count(), 2);
        assert!(mask[18] && mask[19]);
    }
    use crate::isp::ToneCurve;
    use rand::{Rng, SeedableRng};

    #[test]
    fn psnr_hand_values() {
        let a = LdrImage::filled(4, 4, 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = LdrImage::filled(4, 4, 0.6);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let c = LdrImage::filled(4, 4, 0.5 + 1e-3f64.sqrt());
        assert!((psnr(&a, &c).unwrap() - 30.0).abs() < 1e-9);
    }

    #[test]
    fn infinity_serializes_as_string() {
        let m = EvalMetrics {
            psnr: f64::INFINITY,
            ssim: 1.0,
            psnr_uncorrected: 12.5,
        };
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"psnr":"inf","ssim":1.0,"psnr_uncorrected":12.5}"#
        );
    }

    fn textured(seed: u64, w: usize, h: usize) -> LinearImage {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        LinearImage::new(w, h, (0..w * h * 3).map(|_| rng.random_range(0.05..0.9)).collect()).unwrap()
    }

    #[test]
    fn exact_render_scores_perfectly() {
        let tp = ToneParams {
            curve: ToneCurve::LinearClip,
            ..Default::default()
        };
        let hdr = textured(1, 16, 16);
        let gt = tonemap(&hdr, &tp).unwrap();
        let m = evaluate_protocol(&hdr, &gt, &tp).unwrap();
        assert_eq!(m.psnr, f64::INFINITY);
        assert!((m.ssim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn affine_distortion_is_corrected() {
        let tp = ToneParams {
            curve: ToneCurve::LinearClip,
            ..Default::default()
        };
        let gt = tonemap(&textured(2, 16, 16), &tp).unwrap();
        let render = LinearImage::new(
            16,
            16,
            gt.data.iter().zip(&textured(3, 16, 16).data).map(|(g, n)| g * 0.8 + 0.1 * n).collect(),
        )
        .unwrap();
        let distorted = LinearImage::new(16, 16, render.data.iter().map(|v| 0.5 * v + 0.1).collect()).unwrap();
        let base = evaluate_protocol(&render, &gt, &tp).unwrap();
        let m = evaluate_protocol(&distorted, &gt, &tp).unwrap();
        assert!((m.psnr - base.psnr).abs() < 1e-3, "{m:?} vs {base:?}");
        assert!(m.psnr_uncorrected < base.psnr);
        let exact = LinearImage::new(16, 16, gt.data.iter().map(|v| 0.5 * v + 0.1).collect()).unwrap();
        assert!(evaluate_protocol(&exact, &gt, &tp).unwrap().psnr > 100.0);
    }

    #[test]
    fn correction_never_lowers_psnr() {
        let tp = ToneParams::default();
        for seed in 0..10 {
            let gt = tonemap(&textured(seed, 16, 16), &tp).unwrap();
            let m = evaluate_protocol(&textured(seed + 100, 16, 16), &gt, &tp).unwrap();
            assert!(m.psnr >= m.psnr_uncorrected - 1e-9);
        }
    }
}
