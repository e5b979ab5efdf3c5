//! Classical Bayer-space denoisers.
//!
//! Filtering runs independently on each of the four same-color sub-planes of
//! the mosaic, in k-sigma space, then maps back.

use serde::{Deserialize, Serialize};

use super::ksigma::NoiseParams;
use crate::error::{Error, Result};
use crate::raw_io::BayerPlane;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiseMethod {
    /// No filtering; the input is assumed to be denoised elsewhere.
    Passthrough,
    Median3,
    Bilateral,
}

impl std::str::FromStr for DenoiseMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "passthrough" => Ok(DenoiseMethod::Passthrough),
            "median3" => Ok(DenoiseMethod::Median3),
            "bilateral" => Ok(DenoiseMethod::Bilateral),
            other => Err(Error::InvalidParameter(format!(
                "unknown denoiser {other:?} (expected passthrough|median3|bilateral)"
            ))),
        }
    }
}

const BILATERAL_RADIUS: isize = 2;
const BILATERAL_SPATIAL_SIGMA: f64 = 1.0;
/// Range kernel width in units of the local noise standard deviation.
const BILATERAL_RANGE_SCALE: f64 = 2.0;

pub fn denoise(plane: &BayerPlane, method: DenoiseMethod, np: &NoiseParams) -> Result<BayerPlane> {
    if method == DenoiseMethod::Passthrough {
        return Ok(plane.clone());
    }
    np.validate()?;
    if plane.width % 2 != 0 || plane.height % 2 != 0 {
        return Err(Error::Dimension("mosaic dimensions must be even".into()));
    }
    let (sw, sh) = (plane.width / 2, plane.height / 2);
    let mut out = plane.clone();
    for (ox, oy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
        let sub: Vec<f64> = (0..sh)
            .flat_map(|y| (0..sw).map(move |x| (x, y)))
            .map(|(x, y)| np.forward(plane.get(2 * x + ox, 2 * y + oy)))
            .collect();
        let filtered = match method {
            DenoiseMethod::Median3 => median3(&sub, sw, sh),
            DenoiseMethod::Bilateral => bilateral(&sub, sw, sh),
            DenoiseMethod::Passthrough => unreachable!(),
        };
        for y in 0..sh {
            for x in 0..sw {
                out.data[(2 * y + oy) * plane.width + 2 * x + ox] =
                    np.inverse(filtered[y * sw + x]);
            }
        }
    }
    Ok(out)
}

#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    while i < 0 || i >= n {
        i = if i < 0 { -i } else { 2 * (n - 1) - i };
    }
    i as usize
}

fn median3(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    let mut win = [0.0f64; 9];
    for y in 0..h {
        for x in 0..w {
            let mut n = 0;
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let sx = mirror(x as isize + dx, w);
                    let sy = mirror(y as isize + dy, h);
                    win[n] = src[sy * w + sx];
                    n += 1;
                }
            }
            win.sort_by(|a, b| a.total_cmp(b));
            out[y * w + x] = win[4];
        }
    }
    out
}

/// In k-sigma space the noise variance equals the (stabilized) signal, so the
/// range kernel is scaled by `sqrt(y)`.
fn bilateral(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    let inv_2ss = 1.0 / (2.0 * BILATERAL_SPATIAL_SIGMA * BILATERAL_SPATIAL_SIGMA);
    for y in 0..h {
        for x in 0..w {
            let c = src[y * w + x];
            let sr = BILATERAL_RANGE_SCALE * c.max(1.0).sqrt();
            let inv_2sr = 1.0 / (2.0 * sr * sr);
            let (mut acc, mut wsum) = (0.0, 0.0);
            for dy in -BILATERAL_RADIUS..=BILATERAL_RADIUS {
                for dx in -BILATERAL_RADIUS..=BILATERAL_RADIUS {
                    let v = src[mirror(y as isize + dy, h) * w + mirror(x as isize + dx, w)];
                    let d2 = (dx * dx + dy * dy) as f64;
                    let wt = (-d2 * inv_2ss - (v - c) * (v - c) * inv_2sr).exp();
                    acc += wt * v;
                    wsum += wt;
                }
            }
            out[y * w + x] = acc / wsum;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raw_io::Cfa;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn mse(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn passthrough_is_bit_exact() {
        let p = BayerPlane::new(4, 2, Cfa::Gbrg, vec![0.1, -0.02, 0.3, 1.7, 0.0, 0.5, 0.25, 0.125]).unwrap();
        let np = NoiseParams::new(0.01, 0.0).unwrap();
        let out = denoise(&p, DenoiseMethod::Passthrough, &np).unwrap();
        assert_eq!(
            out.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            p.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn median_of_constant_plane() {
        let p = BayerPlane::new(8, 6, Cfa::Rggb, vec![0.3; 48]).unwrap();
        let np = NoiseParams::new(0.01, 1e-4).unwrap();
        let out = denoise(&p, DenoiseMethod::Median3, &np).unwrap();
        for v in out.data {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn median_keeps_cfa_sites_separate() {
        // a checkerboard of two constants per sub-plane must survive untouched
        let w = 8;
        let data: Vec<f64> = (0..w * w)
            .map(|i| if (i % w) % 2 == 0 { 0.2 } else { 0.6 })
            .collect();
        let p = BayerPlane::new(w, w, Cfa::Rggb, data.clone()).unwrap();
        let out = denoise(&p, DenoiseMethod::Median3, &NoiseParams::new(0.01, 0.0).unwrap()).unwrap();
        for (a, b) in out.data.iter().zip(&data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bilateral_reduces_error_on_noisy_ramp() {
        let (w, h) = (64, 48);
        let clean: Vec<f64> = (0..w * h).map(|i| 0.2 + 0.5 * (i % w) as f64 / w as f64).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let noisy: Vec<f64> = clean.iter().map(|c| c + noise.sample(&mut rng)).collect();
        let p = BayerPlane::new(w, h, Cfa::Rggb, noisy.clone()).unwrap();
        // read-noise-only model with the injected sigma
        let np = NoiseParams::new(1e-4, 0.02 * 0.02).unwrap();
        let out = denoise(&p, DenoiseMethod::Bilateral, &np).unwrap();
        let before = mse(&noisy, &clean);
        let after = mse(&out.data, &clean);
        assert!(after < before, "bilateral mse {after} >= input mse {before}");
        let med = denoise(&p, DenoiseMethod::Median3, &np).unwrap();
        assert!(mse(&med.data, &clean) < before);
    }

    #[test]
    fn unknown_method_name() {
        assert!("nlm".parse::<DenoiseMethod>().is_err());
        assert_eq!("median3".parse::<DenoiseMethod>().unwrap(), DenoiseMethod::Median3);
    }

    #[test]
    fn mirror_indices() {
        assert_eq!(mirror(-1, 5), 1);
        assert_eq!(mirror(5, 5), 3);
        assert_eq!(mirror(-2, 2), 0);
    }
}
