use rayon::prelude::*;

use super::image::LinearImage;
use crate::raw_io::BayerPlane;

/// Bilinear CFA interpolation.
///
/// Each missing channel is the mean of the same-color sites in the 3x3
/// neighbourhood, which reproduces the usual 2-tap / 4-tap kernels. Borders
/// use mirror padding (edge excluded), which keeps CFA parity.
pub fn demosaic_bilinear(plane: &BayerPlane) -> LinearImage {
    let (w, h) = (plane.width, plane.height);
    let mirror = |i: isize, n: usize| -> usize {
        if n == 1 {
            0
        } else if i < 0 {
            (-i) as usize
        } else if i as usize >= n {
            2 * (n - 1) - i as usize
        } else {
            i as usize
        }
    };
    let mut data = vec![0.0; w * h * 3];
    data.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let own = plane.cfa.channel_at(x, y);
            let mut sum = [0.0f64; 3];
            let mut taps = [0u32; 3];
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let sx = mirror(x as isize + dx, w);
                    let sy = mirror(y as isize + dy, h);
                    let c = plane.cfa.channel_at(sx, sy);
                    if c != own {
                        sum[c] += plane.get(sx, sy);
                        taps[c] += 1;
                    }
                }
            }
            for c in 0..3 {
                row[x * 3 + c] = if c == own {
                    plane.get(x, y)
                } else {
                    sum[c] / taps[c] as f64
                };
            }
        }
    });
    LinearImage {
        width: w,
        height: h,
        data,
    }
}
