use crate::error::{Error, Result};

/// Window parameters and stability constants of single-scale SSIM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

fn kernel(window: usize, sigma: f64) -> Vec<f64> {
    let mid = (window as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..window)
        .map(|i| (-(i as f64 - mid).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable correlation of a `w x h` plane.
fn blur_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|j| k[j] * tmp[(y + j) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`blur_valid`]: scatters an `(w - n + 1) x (h - n + 1)` map
/// back onto `w x h`.
fn blur_valid_adjoint(map: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        for j in 0..n {
            for x in 0..ow {
                tmp[(y + j) * ow + x] += k[j] * map[y * ow + x];
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for (i, kv) in k.iter().enumerate() {
                out[y * w + x + i] += kv * v;
            }
        }
    }
    out
}

fn channel(data: &[f64], c: usize) -> Vec<f64> {
    data.iter().skip(c).step_by(3).map(|v| v.clamp(0.0, 1.0)).collect()
}

/// Mean SSIM over the valid window positions of every channel, with the
/// gradient with respect to `pred` when `want_grad` is set. Inputs are
/// clamped to `[0, 1]`; the gradient is zero where `pred` is clamped.
pub(crate) fn ssim_impl(
    pred: &[f64],
    target: &[f64],
    width: usize,
    height: usize,
    p: &SsimParams,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    if width < p.window || height < p.window || p.window == 0 {
        return Err(Error::Dimension(format!(
            "{width}x{height} image is smaller than the {0}x{0} SSIM window",
            p.window
        )));
    }
    let k = kernel(p.window, p.sigma);
    let (ow, oh) = (width + 1 - p.window, height + 1 - p.window);
    let count = (ow * oh * 3) as f64;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; pred.len()]);
    for c in 0..3 {
        let x = channel(pred, c);
        let y = channel(target, c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mx = blur_valid(&x, width, height, &k);
        let my = blur_valid(&y, width, height, &k);
        let exx = blur_valid(&xx, width, height, &k);
        let eyy = blur_valid(&yy, width, height, &k);
        let exy = blur_valid(&xy, width, height, &k);
        let m = mx.len();
        let (mut d_mx, mut d_exx, mut d_exy) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        for i in 0..m {
            let (ux, uy) = (mx[i], my[i]);
            let sxx = exx[i] - ux * ux;
            let syy = eyy[i] - uy * uy;
            let sxy = exy[i] - ux * uy;
            let a1 = 2.0 * ux * uy + p.c1;
            let a2 = 2.0 * sxy + p.c2;
            let b1 = ux * ux + uy * uy + p.c1;
            let b2 = sxx + syy + p.c2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                let g = 1.0 / count;
                let inv = 1.0 / (b1 * b2);
                // grouped so that identical inputs cancel exactly
                d_mx[i] = 2.0 * g * inv * (uy * (a2 - a1) + ux * s * (b1 - b2));
                d_exx[i] = -(g * s * b1 * inv);
                d_exy[i] = 2.0 * (g * a1 * inv);
            }
        }
        if let Some(grad) = grad.as_mut() {
            let gm = blur_valid_adjoint(&d_mx, width, height, &k);
            let gxx = blur_valid_adjoint(&d_exx, width, height, &k);
            let gxy = blur_valid_adjoint(&d_exy, width, height, &k);
            for j in 0..width * height {
                let raw = pred[j * 3 + c];
                if (0.0..=1.0).contains(&raw) {
                    grad[j * 3 + c] = gm[j] + 2.0 * x[j] * gxx[j] + y[j] * gxy[j];
                }
            }
        }
    }
    Ok((total / count, grad))
}
