use serde::{Deserialize, Serialize};

use super::image::{LdrImage, LinearImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToneCurve {
    SrgbGamma,
    ReinhardGlobal,
    LinearClip,
}

impl std::str::FromStr for ToneCurve {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "srgb_gamma" | "srgb" => Ok(ToneCurve::SrgbGamma),
            "reinhard_global" | "reinhard" => Ok(ToneCurve::ReinhardGlobal),
            "linear_clip" | "linear" => Ok(ToneCurve::LinearClip),
            other => Err(Error::InvalidParameter(format!("unknown tone curve {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToneParams {
    /// Linear multiplier; `2^stops`.
    pub exposure: f64,
    pub wb_gains: [f64; 3],
    /// Row-major 3x3 applied as `out = ccm * rgb`.
    pub ccm: [f64; 9],
    pub curve: ToneCurve,
    pub output_depth: u32,
}

impl Default for ToneParams {
    fn default() -> Self {
        ToneParams {
            exposure: 1.0,
            wb_gains: [1.0; 3],
            ccm: IDENTITY_CCM,
            curve: ToneCurve::SrgbGamma,
            output_depth: 8,
        }
    }
}

pub const IDENTITY_CCM: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

impl ToneParams {
    pub fn with_stops(mut self, stops: f64) -> Self {
        self.exposure = 2f64.powf(stops);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exposure.is_finite() && self.exposure > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "exposure must be > 0, got {}",
                self.exposure
            )));
        }
        if self.output_depth != 8 {
            return Err(Error::InvalidParameter("only 8-bit output is supported".into()));
        }
        Ok(())
    }
}

/// Piecewise sRGB opto-electronic transfer function.
#[inline]
pub fn srgb_oetf(x: f64) -> f64 {
    if x <= 0.003_130_8 {
        12.92 * x
    } else {
        1.055 * x.powf(1.0 / 2.4) - 0.055
    }
}

/// Exposure, white balance, color matrix, then the curve.
///
/// `srgb_gamma` and `linear_clip` clip to `[0, 1]` before the curve;
/// `reinhard_global` compresses the unclipped value with `x / (1 + x)` and
/// then applies the sRGB OETF.
pub fn tonemap(img: &LinearImage, tp: &ToneParams) -> Result<LdrImage> {
    tp.validate()?;
    let m = &tp.ccm;
    let data = img
        .data
        .chunks_exact(3)
        .flat_map(|p| {
            let r = p[0] * tp.exposure * tp.wb_gains[0];
            let g = p[1] * tp.exposure * tp.wb_gains[1];
            let b = p[2] * tp.exposure * tp.wb_gains[2];
            let rgb = [
                m[0] * r + m[1] * g + m[2] * b,
                m[3] * r + m[4] * g + m[5] * b,
                m[6] * r + m[7] * g + m[8] * b,
            ];
            rgb.map(|v| apply_curve(tp.curve, v))
        })
        .collect();
    Ok(LdrImage {
        width: img.width,
        height: img.height,
        data,
    })
}

#[inline]
fn apply_curve(curve: ToneCurve, v: f64) -> f64 {
    match curve {
        ToneCurve::LinearClip => v.clamp(0.0, 1.0),
        ToneCurve::SrgbGamma => srgb_oetf(v.clamp(0.0, 1.0)),
        ToneCurve::ReinhardGlobal => {
            let v = v.max(0.0);
            srgb_oetf(v / (1.0 + v)).clamp(0.0, 1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one(v: f64) -> LinearImage {
        LinearImage::filled(1, 1, v)
    }

    #[test]
    fn identity_pipeline() {
        let tp = ToneParams {
            curve: ToneCurve::LinearClip,
            ..Default::default()
        };
        assert_eq!(tonemap(&one(0.5), &tp).unwrap().data, vec![0.5; 3]);
    }

    #[test]
    fn exposure_doubles_then_clips() {
        let tp = ToneParams {
            curve: ToneCurve::LinearClip,
            ..Default::default()
        }
        .with_stops(1.0);
        assert_eq!(tp.exposure, 2.0);
        assert_eq!(tonemap(&one(0.6), &tp).unwrap().data, vec![1.0; 3]);
        assert_eq!(tonemap(&one(0.2), &tp).unwrap().data, vec![0.4; 3]);
    }

    #[test]
    fn oetf_knee_is_continuous() {
        let knee = 0.003_130_8;
        let lower = 12.92 * knee;
        let upper = 1.055 * f64::powf(knee, 1.0 / 2.4) - 0.055;
        assert!((lower - 0.04045).abs() < 1e-6);
        assert!((upper - lower).abs() < 1e-6);
        assert!((srgb_oetf(knee) - 0.04045).abs() < 1e-6);
        assert!((srgb_oetf(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wb_and_ccm_order() {
        let tp = ToneParams {
            wb_gains: [2.0, 1.0, 1.0],
            ccm: [0.5, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            curve: ToneCurve::LinearClip,
            ..Default::default()
        };
        let img = LinearImage::new(1, 1, vec![0.2, 0.4, 0.1]).unwrap();
        let out = tonemap(&img, &tp).unwrap().data;
        assert!((out[0] - 0.4).abs() < 1e-12);
        assert!((out[1] - 0.4).abs() < 1e-12);
        assert!((out[2] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn bad_exposure() {
        let tp = ToneParams {
            exposure: 0.0,
            ..Default::default()
        };
        assert!(tonemap(&one(0.1), &tp).is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_monotone_in_exposure(v in -0.05f64..50.0, e in 0.01f64..8.0, de in 0.0f64..4.0) {
            for curve in [ToneCurve::SrgbGamma, ToneCurve::ReinhardGlobal, ToneCurve::LinearClip] {
                let lo = ToneParams { exposure: e, curve, ..Default::default() };
                let hi = ToneParams { exposure: e + de, curve, ..Default::default() };
                let a = tonemap(&one(v), &lo).unwrap().data[0];
                let b = tonemap(&one(v), &hi).unwrap().data[0];
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!((0.0..=1.0).contains(&b));
                if v >= 0.0 {
                    prop_assert!(b >= a - 1e-12);
                }
            }
        }
    }
}
