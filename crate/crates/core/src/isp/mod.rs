//! Image-space processing: variance stabilization, Bayer denoising,
//! demosaicing, the raw-to-display pipeline, evaluation color correction and
//! synthetic defocus.

mod color;
mod defocus;
mod demosaic;
mod denoise;
pub mod image;
mod ksigma;
mod tonemap;

pub use color::{apply_correction, fit_color_correction, ChannelAffine, ColorCorrection};
pub use defocus::synthetic_defocus;
pub use demosaic::demosaic_bilinear;
pub use denoise::{denoise, DenoiseMethod};
pub use image::{LdrImage, LinearImage};
pub use ksigma::{ksigma_forward, ksigma_inverse, NoiseParams};
pub use tonemap::{srgb_oetf, tonemap, ToneCurve, ToneParams, IDENTITY_CCM};
