//! Real spherical harmonics up to degree 3, in the sign convention used by
//! the Gaussian splatting ecosystem.

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_SH_DEGREE: usize = 3;
pub const SH_COEFFS: usize = 16;

/// Offset added to the SH sum before clamping at zero.
pub const SH_OFFSET: f64 = 0.5;

#[inline]
pub fn num_coeffs(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Basis values for `dir` (assumed unit length); entries past `degree` are 0.
pub fn sh_basis(dir: [f64; 3], degree: usize) -> [f64; SH_COEFFS] {
    let [x, y, z] = dir;
    let mut b = [0.0; SH_COEFFS];
    b[0] = SH_C0;
    if degree >= 1 {
        b[1] = -C1 * y;
        b[2] = C1 * z;
        b[3] = -C1 * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        b[4] = C2[0] * x * y;
        b[5] = C2[1] * y * z;
        b[6] = C2[2] * (2.0 * zz - xx - yy);
        b[7] = C2[3] * x * z;
        b[8] = C2[4] * (xx - yy);
        if degree >= 3 {
            b[9] = C3[0] * y * (3.0 * xx - yy);
            b[10] = C3[1] * x * y * z;
            b[11] = C3[2] * y * (4.0 * zz - xx - yy);
            b[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            b[13] = C3[4] * x * (4.0 * zz - xx - yy);
            b[14] = C3[5] * z * (xx - yy);
            b[15] = C3[6] * x * (xx - 3.0 * yy);
        }
    }
    b
}

/// Partial derivatives of each basis polynomial with respect to the
/// direction components, treated as independent variables.
pub fn sh_basis_grad(dir: [f64; 3], degree: usize) -> [[f64; 3]; SH_COEFFS] {
    let [x, y, z] = dir;
    let mut g = [[0.0; 3]; SH_COEFFS];
    if degree >= 1 {
        g[1] = [0.0, -C1, 0.0];
        g[2] = [0.0, 0.0, C1];
        g[3] = [-C1, 0.0, 0.0];
    }
    if degree >= 2 {
        g[4] = [C2[0] * y, C2[0] * x, 0.0];
        g[5] = [0.0, C2[1] * z, C2[1] * y];
        g[6] = [-2.0 * C2[2] * x, -2.0 * C2[2] * y, 4.0 * C2[2] * z];
        g[7] = [C2[3] * z, 0.0, C2[3] * x];
        g[8] = [2.0 * C2[4] * x, -2.0 * C2[4] * y, 0.0];
        if degree >= 3 {
            let (xx, yy, zz) = (x * x, y * y, z * z);
            g[9] = [6.0 * C3[0] * x * y, C3[0] * (3.0 * xx - 3.0 * yy), 0.0];
            g[10] = [C3[1] * y * z, C3[1] * x * z, C3[1] * x * y];
            g[11] = [
                -2.0 * C3[2] * x * y,
                C3[2] * (4.0 * zz - xx - 3.0 * yy),
                8.0 * C3[2] * y * z,
            ];
            g[12] = [
                -6.0 * C3[3] * x * z,
                -6.0 * C3[3] * y * z,
                C3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy),
            ];
            g[13] = [
                C3[4] * (4.0 * zz - 3.0 * xx - yy),
                -2.0 * C3[4] * x * y,
                8.0 * C3[4] * x * z,
            ];
            g[14] = [2.0 * C3[5] * x * z, -2.0 * C3[5] * y * z, C3[5] * (xx - yy)];
            g[15] = [C3[6] * (3.0 * xx - 3.0 * yy), -6.0 * C3[6] * x * y, 0.0];
        }
    }
    g
}

/// `max(0, sum_k c_k Y_k(dir) + 0.5)` per channel. Coefficients are
/// coefficient-major: `coeffs[k][channel]`.
pub fn eval_sh(coeffs: &[[f64; 3]; SH_COEFFS], dir: [f64; 3], active_degree: usize) -> [f64; 3] {
    let raw = eval_sh_raw(coeffs, dir, active_degree);
    raw.map(|v| v.max(0.0))
}

/// The SH sum plus offset, before the clamp.
pub fn eval_sh_raw(coeffs: &[[f64; 3]; SH_COEFFS], dir: [f64; 3], active_degree: usize) -> [f64; 3] {
    let degree = active_degree.min(MAX_SH_DEGREE);
    let basis = sh_basis(dir, degree);
    let mut rgb = [SH_OFFSET; 3];
    for (b, c) in basis.iter().zip(coeffs).take(num_coeffs(degree)) {
        for ch in 0..3 {
            rgb[ch] += b * c[ch];
        }
    }
    rgb
}

/// DC coefficient that makes [`eval_sh`] return `rgb` at degree 0.
#[inline]
pub fn rgb_to_dc(rgb: f64) -> f64 {
    (rgb - SH_OFFSET) / SH_C0
}
