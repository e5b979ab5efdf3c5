//! Differentiable tile-based splatting.
//!
//! [`project`] maps Gaussians to screen-space splats, [`rasterize_forward`]
//! composites them front to back per 16x16 tile, [`rasterize_oracle`] does
//! the same math per pixel over every splat, and [`rasterize_backward`]
//! returns analytic parameter gradients.

mod backward;
mod forward;
mod project;

pub use backward::{rasterize_backward, ParamGrads};
pub use forward::{rasterize_forward, rasterize_oracle, ForwardAux, RenderOutput};
pub use project::{project, project_one, Splat2D};

use serde::{Deserialize, Serialize};

use crate::camera::{Camera, PoseRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RasterConfig {
    pub tile_size: usize,
    /// Splats with camera-space depth at or below this are culled.
    pub near_clip: f64,
    /// Added to the diagonal of every projected covariance, in pixels squared.
    pub lowpass: f64,
    /// Per-pixel contributions `alpha * G` below this are skipped.
    pub alpha_threshold: f64,
    /// Compositing stops once transmittance falls below this.
    pub transmittance_floor: f64,
    /// Highest SH degree evaluated.
    pub sh_degree: usize,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            tile_size: 16,
            near_clip: 0.2,
            lowpass: 0.3,
            alpha_threshold: 1.0 / 255.0,
            transmittance_floor: 1e-4,
            sh_degree: 3,
        }
    }
}

impl RasterConfig {
    /// No skipping and no early termination: every splat reaches every pixel.
    pub fn untruncated() -> Self {
        RasterConfig {
            alpha_threshold: 0.0,
            transmittance_floor: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.tile_size >= 1
            && self.near_clip >= 0.0
            && self.lowpass >= 0.0
            && self.alpha_threshold >= 0.0
            && self.transmittance_floor >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid raster config {self:?}")))
        }
    }
}

/// A camera and the pose it is rendered from.
#[derive(Debug, Clone, Copy)]
pub struct View<'a> {
    pub camera: &'a Camera,
    pub pose: &'a PoseRecord,
}

impl<'a> View<'a> {
    pub fn new(camera: &'a Camera, pose: &'a PoseRecord) -> Self {
        View { camera, pose }
    }
}
