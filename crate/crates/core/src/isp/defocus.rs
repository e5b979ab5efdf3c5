use rayon::prelude::*;

use super::image::LinearImage;
use crate::error::{Error, Result};

/// Depth-dependent disc blur gathered in linear space.
///
/// Each output pixel averages the input over a disc of radius
/// `strength * |1/depth - 1/focus_depth|`; radii below half a pixel leave the
/// pixel untouched. Non-positive depths are treated as infinitely far.
pub fn synthetic_defocus(
    img: &LinearImage,
    depth: &[f64],
    focus_depth: f64,
    strength: f64,
) -> Result<LinearImage> {
    if !(focus_depth.is_finite() && focus_depth > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "focus depth must be > 0, got {focus_depth}"
        )));
    }
    if depth.len() != img.width * img.height {
        return Err(Error::Dimension(format!(
            "depth map has {} values for a {}x{} image",
            depth.len(),
            img.width,
            img.height
        )));
    }
    let (w, h) = (img.width, img.height);
    let inv_focus = 1.0 / focus_depth;
    let mut out = img.clone();
    out.data.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let d = depth[y * w + x];
            let inv_d = if d.is_finite() && d > 0.0 { 1.0 / d } else { 0.0 };
            let radius = strength.abs() * (inv_d - inv_focus).abs();
            if radius < 0.5 {
                continue;
            }
            let r = radius.ceil() as isize;
            let r2 = radius * radius;
            let mut acc = [0.0; 3];
            let mut n = 0usize;
            for dy in -r..=r {
                let sy = y as isize + dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let sx = x as isize + dx;
                    if sx < 0 || sx >= w as isize || ((dx * dx + dy * dy) as f64) > r2 {
                        continue;
                    }
                    let p = img.pixel(sx as usize, sy as usize);
                    for c in 0..3 {
                        acc[c] += p[c];
                    }
                    n += 1;
                }
            }
            for c in 0..3 {
                row[x * 3 + c] = acc[c] / n as f64;
            }
        }
    });
    Ok(out)
}
