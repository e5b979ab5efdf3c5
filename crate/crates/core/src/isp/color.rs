use super::image::LdrImage;
use crate::error::Result;

/// Per-channel affine map `gain * x + bias`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelAffine {
    pub gain: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorCorrection {
    pub channels: [ChannelAffine; 3],
    /// `render` after correction, clipped to `[0, 1]`.
    pub corrected: LdrImage,
}

/// Least-squares per-channel affine fit of `render` onto `reference`.
///
/// A channel with zero variance in `render` gets gain 1 and the mean
/// difference as bias.
pub fn fit_color_correction(render: &LdrImage, reference: &LdrImage) -> Result<ColorCorrection> {
    render.same_shape(reference)?;
    let n = (render.width * render.height) as f64;
    let mut channels = [ChannelAffine { gain: 1.0, bias: 0.0 }; 3];
    for (c, ch) in channels.iter_mut().enumerate() {
        let xs = render.data.iter().skip(c).step_by(3);
        let ys = reference.data.iter().skip(c).step_by(3);
        let (mut sx, mut sy) = (0.0, 0.0);
        for (x, y) in xs.clone().zip(ys.clone()) {
            sx += x;
            sy += y;
        }
        let (mx, my) = (sx / n, sy / n);
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for (x, y) in xs.zip(ys) {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
        }
        *ch = if sxx <= f64::EPSILON * n {
            ChannelAffine {
                gain: 1.0,
                bias: my - mx,
            }
        } else {
            let gain = sxy / sxx;
            ChannelAffine {
                gain,
                bias: my - gain * mx,
            }
        };
    }
    let corrected = apply_correction(render, &channels);
    Ok(ColorCorrection {
        channels,
        corrected,
    })
}

pub fn apply_correction(img: &LdrImage, channels: &[ChannelAffine; 3]) -> LdrImage {
    let data = img
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let a = channels[i % 3];
            (a.gain * v + a.bias).clamp(0.0, 1.0)
        })
        .collect();
    LdrImage {
        width: img.width,
        height: img.height,
        data,
    }
}
