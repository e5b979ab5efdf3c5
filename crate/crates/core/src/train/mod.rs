//! Scene optimization: Adam per parameter class, exponential position
//! learning-rate decay, adaptive densification and pruning.

mod adam;
mod config;
mod densify;
mod trainer;

pub use adam::{adam_step, AdamParams, Moments, OptimState};
pub use config::{lr_at, Preset, TrainConfig};
pub use densify::{densify_and_prune, is_densify_iteration, DensifyOutcome, DensifyStats};
pub use trainer::{train, DensifyEvent, LogRecord, TrainView, Trainer};
