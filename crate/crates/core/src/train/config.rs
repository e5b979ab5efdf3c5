use serde::{Deserialize, Serialize};

use super::adam::AdamParams;
use crate::error::{Error, Result};

/// Exponential interpolation from `init` to `final_lr` over `steps`, then flat.
pub fn lr_at(iter: usize, init: f64, final_lr: f64, steps: usize) -> f64 {
    if steps == 0 || iter >= steps {
        return final_lr;
    }
    let t = iter as f64 / steps as f64;
    (init.ln() * (1.0 - t) + final_lr.ln() * t).exp()
}

/// Densification threshold multiplier for small images and clouds, where each
/// Gaussian covers far more pixels than in a full-size capture.
pub const DESK_GRAD_SCALE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Reduced scaling and position learning rates, deferred pruning.
    Tuned,
    /// Reference-style raw training: higher learning rates, lower
    /// densification threshold, pruning from the first densification step.
    Baseline,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tuned" => Ok(Preset::Tuned),
            "baseline" => Ok(Preset::Baseline),
            other => Err(Error::InvalidParameter(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Multiplied by the scene extent.
    pub position_lr_init: f64,
    /// Multiplied by the scene extent.
    pub position_lr_final: f64,
    /// 0 means `iterations`.
    pub position_lr_decay_steps: usize,
    pub scaling_lr: f64,
    pub rotation_lr: f64,
    pub opacity_lr: f64,
    /// DC learning rate; higher orders use `sh_lr / 20`.
    pub sh_lr: f64,
    pub densify_grad_thresh: f64,
    pub densify_interval: usize,
    pub densify_start: usize,
    pub densify_stop: usize,
    pub prune_start: usize,
    pub opacity_reset_interval: usize,
    pub prune_opacity: f64,
    /// Gaussians larger than this fraction of the extent are split, smaller ones cloned.
    pub percent_dense: f64,
    pub split_divisor: f64,
    /// Prune Gaussians whose screen radius exceeds this fraction of the image size.
    pub max_screen_fraction: f64,
    /// First iteration at which the screen-radius rule prunes.
    pub screen_prune_start: usize,
    pub sh_degree: usize,
    /// Active SH degree grows by one every this many iterations.
    pub sh_degree_interval: usize,
    pub adam: AdamParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::preset(Preset::Tuned, 30_000)
    }
}

impl TrainConfig {
    /// Full-length schedule for `iterations` (nominally 30000).
    pub fn preset(preset: Preset, iterations: usize) -> Self {
        let mut cfg = TrainConfig {
            iterations,
            position_lr_init: 8e-5,
            position_lr_final: 8e-7,
            position_lr_decay_steps: 0,
            scaling_lr: 1e-3,
            rotation_lr: 1e-3,
            opacity_lr: 0.05,
            sh_lr: 2.5e-3,
            densify_grad_thresh: 2e-4,
            densify_interval: 100,
            densify_start: 500,
            densify_stop: iterations / 2,
            prune_start: 3000,
            opacity_reset_interval: 3000,
            prune_opacity: 0.005,
            percent_dense: 0.01,
            split_divisor: 1.6,
            max_screen_fraction: 0.2,
            screen_prune_start: 3000,
            sh_degree: 3,
            sh_degree_interval: 1000,
            adam: AdamParams::default(),
            seed: 0,
        };
        if preset == Preset::Baseline {
            cfg.apply_baseline();
        }
        cfg
    }

    /// Short schedule for small synthetic scenes. Densification runs over the
    /// first half, opacity resets and screen-radius pruning are disabled, the
    /// tuned preset defers pruning to a quarter of the run, and gradient
    /// thresholds are raised by [`DESK_GRAD_SCALE`].
    pub fn desk(preset: Preset, iterations: usize) -> Self {
        let mut cfg = TrainConfig::preset(Preset::Tuned, iterations);
        cfg.densify_start = (iterations / 20).max(1);
        cfg.densify_interval = (iterations / 40).max(1);
        cfg.densify_stop = iterations / 2;
        cfg.prune_start = iterations / 4;
        cfg.opacity_reset_interval = 0;
        cfg.screen_prune_start = iterations;
        cfg.densify_grad_thresh *= DESK_GRAD_SCALE;
        cfg.sh_degree_interval = (iterations / 6).max(1);
        if preset == Preset::Baseline {
            cfg.apply_baseline();
        }
        cfg
    }

    fn apply_baseline(&mut self) {
        self.scaling_lr = 5e-3;
        self.position_lr_init = 1.6e-4;
        self.position_lr_final = 1.6e-6;
        self.densify_grad_thresh /= 2.0;
        self.prune_start = self.densify_start;
    }

    pub fn decay_steps(&self) -> usize {
        if self.position_lr_decay_steps == 0 {
            self.iterations
        } else {
            self.position_lr_decay_steps
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lrs = [
            self.position_lr_init,
            self.position_lr_final,
            self.scaling_lr,
            self.rotation_lr,
            self.opacity_lr,
            self.sh_lr,
        ];
        if lrs.iter().any(|lr| !(*lr > 0.0 && lr.is_finite())) {
            return Err(Error::Config("all learning rates must be positive".into()));
        }
        if self.densify_start >= self.densify_stop || self.densify_stop > self.iterations {
            return Err(Error::Config(format!(
                "need densify_start < densify_stop <= iterations, got {} / {} / {}",
                self.densify_start, self.densify_stop, self.iterations
            )));
        }
        if self.densify_interval == 0 || self.sh_degree_interval == 0 {
            return Err(Error::Config("intervals must be positive".into()));
        }
        if self.sh_degree > crate::scene::sh::MAX_SH_DEGREE {
            return Err(Error::Config(format!("sh_degree {} above 3", self.sh_degree)));
        }
        if !(self.split_divisor > 1.0) || !(self.percent_dense > 0.0) {
            return Err(Error::Config("split_divisor must exceed 1 and percent_dense be positive".into()));
        }
        Ok(())
    }
}
