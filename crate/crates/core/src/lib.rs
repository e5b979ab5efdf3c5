//! HDR raw Gaussian splatting: raw frame I/O, a small ISP, COLMAP ingestion,
//! a differentiable tile rasterizer, HDR-aware losses and a trainer.

pub mod camera;
pub mod colmap;
pub mod error;
pub mod gradcheck;
pub mod isp;
pub mod loss;
pub mod pipeline;
pub mod raw_io;
pub mod render;
pub mod scene;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
