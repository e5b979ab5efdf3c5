use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::{adam_step, OptimState};
use super::config::{lr_at, TrainConfig};
use super::densify::{densify_and_prune, DensifyOutcome, DensifyStats};
use crate::camera::{Camera, PoseRecord};
use crate::error::{Error, Result};
use crate::isp::LinearImage;
use crate::loss::{psnr_values, serialize_db, total_loss, LossConfig};
use crate::render::{rasterize_backward, rasterize_forward, ParamGrads, RasterConfig, View};
use crate::scene::GaussianCloud;

/// A training image and the camera it was taken with.
#[derive(Debug, Clone)]
pub struct TrainView {
    pub camera: Camera,
    pub pose: PoseRecord,
    pub target: LinearImage,
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub iter: usize,
    pub loss: f64,
    pub l1: f64,
    pub dssim: f64,
    pub n_points: usize,
    pub lr_position: f64,
    /// Linear-space PSNR of this iteration's render against its target, peak 1.
    #[serde(serialize_with = "serialize_db")]
    pub psnr: f64,
    pub view: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub densify: Option<DensifyEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DensifyEvent {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    pub opacity_reset: bool,
}

impl From<DensifyOutcome> for DensifyEvent {
    fn from(o: DensifyOutcome) -> Self {
        DensifyEvent {
            cloned: o.cloned,
            split: o.split,
            pruned: o.pruned,
            opacity_reset: o.opacity_reset,
        }
    }
}

/// Owns the cloud and optimizer state for one optimization run.
pub struct Trainer<'a> {
    cloud: GaussianCloud,
    state: OptimState,
    stats: DensifyStats,
    views: &'a [TrainView],
    extent: f64,
    cfg: TrainConfig,
    loss: LossConfig,
    raster: RasterConfig,
    iteration: usize,
    order: Vec<usize>,
    cursor: usize,
    view_rng: ChaCha8Rng,
    rng: ChaCha8Rng,
    image_size: usize,
}

impl<'a> Trainer<'a> {
    /// Starts at iteration `start_iteration` (0 for a fresh run). Optimizer
    /// moments always start at zero.
    pub fn new(
        cloud: GaussianCloud,
        views: &'a [TrainView],
        extent: f64,
        cfg: TrainConfig,
        loss: LossConfig,
        raster: RasterConfig,
        start_iteration: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        loss.validate()?;
        raster.validate()?;
        cloud.validate()?;
        if views.is_empty() {
            return Err(Error::Config("no training views".into()));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::InvalidParameter(format!("scene extent {extent} must be positive")));
        }
        for v in views {
            if v.target.width != v.camera.width || v.target.height != v.camera.height {
                return Err(Error::Dimension(format!("target for {} does not match its camera", v.pose.name)));
            }
        }
        let image_size = views.iter().map(|v| v.camera.width.max(v.camera.height)).max().unwrap_or(1);
        let n = cloud.len();
        let mut view_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
        let mut order: Vec<usize> = (0..views.len()).collect();
        // replay the view schedule up to the start iteration
        for _ in 0..=start_iteration / views.len() {
            order.shuffle(&mut view_rng);
        }
        Ok(Trainer {
            cloud,
            state: OptimState::new(n),
            stats: DensifyStats::new(n),
            views,
            extent,
            cfg,
            loss,
            raster,
            iteration: start_iteration,
            order,
            cursor: start_iteration % views.len(),
            view_rng,
            rng,
            image_size,
        })
    }

    pub fn cloud(&self) -> &GaussianCloud {
        &self.cloud
    }

    pub fn into_cloud(self) -> GaussianCloud {
        self.cloud
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }

    pub fn optimizer(&self) -> &OptimState {
        &self.state
    }

    pub fn stats(&self) -> &DensifyStats {
        &self.stats
    }

    /// SH degree in use at the upcoming iteration.
    pub fn active_sh_degree(&self) -> usize {
        (self.iteration / self.cfg.sh_degree_interval).min(self.cfg.sh_degree)
    }

    fn next_view(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order.shuffle(&mut self.view_rng);
            self.cursor = 0;
        }
        let v = self.order[self.cursor];
        self.cursor += 1;
        v
    }

    /// Runs one iteration and returns its log record.
    pub fn step(&mut self) -> Result<LogRecord> {
        let active = self.active_sh_degree();
        self.iteration += 1;
        let iter = self.iteration;
        let vi = self.next_view();
        let view_data = &self.views[vi];
        let view = View::new(&view_data.camera, &view_data.pose);
        let raster = RasterConfig {
            sh_degree: active,
            ..self.raster.clone()
        };
        let fwd = rasterize_forward(&self.cloud, &view, &raster);
        let report = total_loss(&fwd.color, &view_data.target, &self.loss)?;
        if !report.total.is_finite() {
            return Err(Error::Diverged {
                iteration: iter,
                reason: format!("loss is {}", report.total),
            });
        }
        let grads = rasterize_backward(&self.cloud, &view, &raster, &report.grad, &fwd)?;
        if !grads.is_finite() {
            return Err(Error::Diverged {
                iteration: iter,
                reason: "non-finite parameter gradient".into(),
            });
        }
        let psnr = psnr_values(&fwd.color.data, &view_data.target.data, 1.0)?;
        let lr_position = self.apply(&grads, iter);
        if iter < self.cfg.densify_stop {
            self.stats.record(&grads, &fwd.radii);
        }
        let outcome = densify_and_prune(
            &mut self.cloud,
            &mut self.state,
            &mut self.stats,
            &self.cfg,
            iter,
            self.extent,
            self.image_size,
            &mut self.rng,
        );
        Ok(LogRecord {
            iter,
            loss: report.total,
            l1: report.l1_term,
            dssim: report.dssim_term,
            n_points: self.cloud.len(),
            lr_position,
            psnr,
            view: vi,
            densify: (outcome != DensifyOutcome::default()).then(|| outcome.into()),
        })
    }

    fn apply(&mut self, g: &ParamGrads, iter: usize) -> f64 {
        let cfg = &self.cfg;
        self.state.step += 1;
        let t = self.state.step;
        let hp = cfg.adam;
        let lr_pos = lr_at(
            iter - 1,
            cfg.position_lr_init * self.extent,
            cfg.position_lr_final * self.extent,
            cfg.decay_steps(),
        );
        let c = &mut self.cloud;
        adam_step(
            c.positions.as_flattened_mut(),
            g.positions.as_flattened(),
            &mut self.state.positions,
            lr_pos,
            t,
            &hp,
        );
        adam_step(
            c.log_scales.as_flattened_mut(),
            g.log_scales.as_flattened(),
            &mut self.state.log_scales,
            cfg.scaling_lr,
            t,
            &hp,
        );
        adam_step(
            c.quaternions.as_flattened_mut(),
            g.quaternions.as_flattened(),
            &mut self.state.quaternions,
            cfg.rotation_lr,
            t,
            &hp,
        );
        adam_step(&mut c.opacity_logits, &g.opacity_logits, &mut self.state.opacity, cfg.opacity_lr, t, &hp);
        let n = c.len();
        let mut dc = Vec::with_capacity(n * 3);
        let mut rest = Vec::with_capacity(n * 45);
        let mut dc_g = Vec::with_capacity(n * 3);
        let mut rest_g = Vec::with_capacity(n * 45);
        for i in 0..n {
            dc.extend_from_slice(&c.sh_coeffs[i][0]);
            dc_g.extend_from_slice(&g.sh[i][0]);
            for k in 1..16 {
                rest.extend_from_slice(&c.sh_coeffs[i][k]);
                rest_g.extend_from_slice(&g.sh[i][k]);
            }
        }
        adam_step(&mut dc, &dc_g, &mut self.state.sh_dc, cfg.sh_lr, t, &hp);
        adam_step(&mut rest, &rest_g, &mut self.state.sh_rest, cfg.sh_lr / 20.0, t, &hp);
        for i in 0..n {
            c.sh_coeffs[i][0].copy_from_slice(&dc[i * 3..i * 3 + 3]);
            for k in 1..16 {
                let o = i * 45 + (k - 1) * 3;
                c.sh_coeffs[i][k].copy_from_slice(&rest[o..o + 3]);
            }
        }
        lr_pos
    }

    /// Steps until the configured iteration count, passing every record to `on_step`.
    pub fn run(&mut self, mut on_step: impl FnMut(&Self, &LogRecord) -> Result<()>) -> Result<()> {
        while !self.is_done() {
            let rec = self.step()?;
            on_step(self, &rec)?;
        }
        Ok(())
    }
}

/// Trains `cloud` on `views` for `cfg.iterations` and returns the result and its log.
pub fn train(
    cloud: GaussianCloud,
    views: &[TrainView],
    extent: f64,
    cfg: &TrainConfig,
    loss: &LossConfig,
    raster: &RasterConfig,
) -> Result<(GaussianCloud, Vec<LogRecord>)> {
    let mut trainer = Trainer::new(cloud, views, extent, cfg.clone(), loss.clone(), raster.clone(), 0)?;
    let mut log = Vec::with_capacity(cfg.iterations);
    trainer.run(|_, rec| {
        log.push(rec.clone());
        Ok(())
    })?;
    Ok((trainer.into_cloud(), log))
}
