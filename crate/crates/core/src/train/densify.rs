use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use super::adam::OptimState;
use super::config::TrainConfig;
use crate::camera::quat_to_matrix;
use crate::render::ParamGrads;
use crate::scene::{logit, GaussianCloud};

/// Screen-space gradient statistics accumulated between densification steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DensifyStats {
    pub grad_accum: Vec<f64>,
    pub denom: Vec<u32>,
    pub max_radii: Vec<u32>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        DensifyStats {
            grad_accum: vec![0.0; n],
            denom: vec![0; n],
            max_radii: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.grad_accum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad_accum.is_empty()
    }

    /// Adds one view's statistics for every Gaussian that contributed to it.
    pub fn record(&mut self, grads: &ParamGrads, radii: &[u32]) {
        for i in 0..self.len() {
            if grads.touched[i] {
                self.grad_accum[i] += grads.mean2d_grad_norm[i];
                self.denom[i] += 1;
                self.max_radii[i] = self.max_radii[i].max(radii[i]);
            }
        }
    }

    /// Mean gradient norm per Gaussian, 0 where it was never seen.
    pub fn mean_grads(&self) -> Vec<f64> {
        self.grad_accum
            .iter()
            .zip(&self.denom)
            .map(|(g, &d)| if d > 0 { g / d as f64 } else { 0.0 })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DensifyOutcome {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    pub opacity_reset: bool,
}

/// Offset drawn from the Gaussian itself: `R (s * z)`, `z` standard normal.
fn sample_offset(cloud: &GaussianCloud, i: usize, rng: &mut impl Rng, clamp_sigma: bool) -> Vector3<f64> {
    let s = cloud.log_scales[i].map(f64::exp);
    let z: [f64; 3] = [0; 3].map(|_| {
        let v: f64 = rng.sample(StandardNormal);
        if clamp_sigma {
            v.clamp(-1.0, 1.0)
        } else {
            v
        }
    });
    quat_to_matrix(cloud.quaternions[i]) * Vector3::new(s[0] * z[0], s[1] * z[1], s[2] * z[2])
}

fn push_copy(cloud: &mut GaussianCloud, i: usize) {
    cloud.push(
        cloud.positions[i],
        cloud.log_scales[i],
        cloud.quaternions[i],
        cloud.sh_coeffs[i],
        cloud.opacity_logits[i],
    );
}

/// Whether densification, pruning or an opacity reset is due after `iter`.
pub fn is_densify_iteration(cfg: &TrainConfig, iter: usize) -> bool {
    iter >= cfg.densify_start && iter <= cfg.densify_stop && iter % cfg.densify_interval == 0
}

pub fn is_opacity_reset_iteration(cfg: &TrainConfig, iter: usize) -> bool {
    cfg.opacity_reset_interval > 0 && iter <= cfg.densify_stop && iter % cfg.opacity_reset_interval == 0
}

/// Clone, split and prune at a densification iteration, then reset opacities
/// if due. Statistics are cleared for every Gaussian afterwards; optimizer
/// moments follow the cloud (zero for new entries).
#[allow(clippy::too_many_arguments)]
pub fn densify_and_prune(
    cloud: &mut GaussianCloud,
    state: &mut OptimState,
    stats: &mut DensifyStats,
    cfg: &TrainConfig,
    iter: usize,
    extent: f64,
    image_size: usize,
    rng: &mut impl Rng,
) -> DensifyOutcome {
    let mut outcome = DensifyOutcome::default();
    if is_densify_iteration(cfg, iter) {
        let n = cloud.len();
        let grads = stats.mean_grads();
        let split_above = cfg.percent_dense * extent;
        let mut split_mask = vec![false; n];
        for i in 0..n {
            if grads[i] < cfg.densify_grad_thresh || grads[i] == 0.0 {
                continue;
            }
            if cloud.max_scale(i) > split_above {
                split_mask[i] = true;
                outcome.split += 1;
            } else {
                push_copy(cloud, i);
                let j = cloud.len() - 1;
                let off = sample_offset(cloud, i, rng, true);
                for c in 0..3 {
                    cloud.positions[j][c] += off[c];
                }
                outcome.cloned += 1;
            }
        }
        for i in 0..n {
            if !split_mask[i] {
                continue;
            }
            for _ in 0..2 {
                push_copy(cloud, i);
                let j = cloud.len() - 1;
                let off = sample_offset(cloud, i, rng, false);
                for c in 0..3 {
                    cloud.positions[j][c] += off[c];
                    cloud.log_scales[j][c] -= cfg.split_divisor.ln();
                }
            }
        }
        let added = cloud.len() - n;
        state.extend_zeros(added);
        let prune = iter >= cfg.prune_start;
        let screen_prune = prune && iter >= cfg.screen_prune_start;
        let max_radius = cfg.max_screen_fraction * image_size as f64;
        let mut max_radii = stats.max_radii.clone();
        max_radii.resize(cloud.len(), 0);
        let keep: Vec<bool> = (0..cloud.len())
            .map(|i| {
                if i < n && split_mask[i] {
                    return false;
                }
                let too_big = screen_prune && max_radii[i] as f64 > max_radius;
                !(prune && cloud.opacity(i) < cfg.prune_opacity || too_big)
            })
            .collect();
        let removed = keep.iter().filter(|k| !**k).count();
        outcome.pruned = removed - outcome.split;
        if removed > 0 {
            cloud.retain(&keep);
            state.retain(&keep);
        }
        *stats = DensifyStats::new(cloud.len());
    }
    if is_opacity_reset_iteration(cfg, iter) {
        let cap = logit(0.01);
        for i in 0..cloud.len() {
            if cloud.opacity_logits[i] > cap {
                cloud.opacity_logits[i] = cap;
            }
            state.opacity.reset(i);
        }
        outcome.opacity_reset = true;
    }
    debug_assert!(state.is_consistent(cloud.len()) && stats.len() == cloud.len());
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> TrainConfig {
        let mut c = TrainConfig::desk(super::super::Preset::Tuned, 2000);
        c.densify_start = 100;
        c.densify_interval = 100;
        c.densify_stop = 1000;
        c.prune_start = 500;
        c
    }

    fn cloud_of(scales: &[f64], opacities: &[f64]) -> GaussianCloud {
        let mut c = GaussianCloud::default();
        for (k, (&s, &o)) in scales.iter().zip(opacities).enumerate() {
            c.push([k as f64, 0.0, 0.0], [s.ln(); 3], [1.0, 0.0, 0.0, 0.0], [[0.1; 3]; 16], logit(o));
        }
        c
    }

    fn run(cloud: &mut GaussianCloud, grads: &[f64], iter: usize) -> DensifyOutcome {
        let mut state = OptimState::new(cloud.len());
        let mut stats = DensifyStats::new(cloud.len());
        for (i, g) in grads.iter().enumerate() {
            stats.grad_accum[i] = *g;
            stats.denom[i] = 1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = densify_and_prune(cloud, &mut state, &mut stats, &cfg(), iter, 1.0, 64, &mut rng);
        assert!(state.is_consistent(cloud.len()));
        assert_eq!(stats.len(), cloud.len());
        out
    }

    #[test]
    fn quiet_healthy_cloud_unchanged() {
        let mut c = cloud_of(&[0.005, 0.5], &[0.5, 0.9]);
        let before = c.clone();
        let out = run(&mut c, &[1e-5, 1e-5], 600);
        assert_eq!(c, before);
        assert_eq!(out, DensifyOutcome::default());
    }

    #[test]
    fn large_high_gradient_gaussian_splits_in_two() {
        let mut c = cloud_of(&[0.5], &[0.5]);
        let out = run(&mut c, &[1.0], 200);
        assert_eq!(c.len(), 2);
        assert_eq!(out.split, 1);
        for i in 0..2 {
            assert!((c.log_scales[i][0] - (0.5f64 / 1.6).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn small_high_gradient_gaussian_clones_within_one_sigma() {
        let mut c = cloud_of(&[0.005], &[0.5]);
        run(&mut c, &[1.0], 200);
        assert_eq!(c.len(), 2);
        assert_eq!(c.positions[0], [0.0; 3]);
        assert!(c.positions[1].iter().all(|v| v.abs() <= 0.005 + 1e-15));
        assert_eq!(c.log_scales[1], c.log_scales[0]);
    }

    #[test]
    fn pruning_deferred_before_prune_start() {
        let mut c = cloud_of(&[0.005, 0.005], &[1e-4, 0.5]);
        run(&mut c, &[0.0, 0.0], 200);
        assert_eq!(c.len(), 2);
        let out = run(&mut c, &[0.0, 0.0], 600);
        assert_eq!(c.len(), 1);
        assert_eq!(out.pruned, 1);
    }

    #[test]
    fn screen_radius_prune_waits_for_its_start() {
        let mut conf = cfg();
        conf.screen_prune_start = 800;
        let mut c = cloud_of(&[0.005], &[0.5]);
        let mut state = OptimState::new(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (iter, left) in [(600, 1), (800, 0)] {
            let mut stats = DensifyStats::new(c.len());
            stats.max_radii[0] = 40;
            densify_and_prune(&mut c, &mut state, &mut stats, &conf, iter, 1.0, 64, &mut rng);
            assert_eq!(c.len(), left, "iter {iter}");
        }
    }

    #[test]
    fn nothing_outside_densify_window() {
        let mut c = cloud_of(&[0.5], &[1e-4]);
        run(&mut c, &[1.0], 1100);
        run(&mut c, &[1.0], 650);
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn opacity_reset_caps_logits() {
        let mut c = cloud_of(&[0.005, 0.005], &[0.9, 0.001]);
        let mut state = OptimState::new(2);
        state.opacity.m = vec![1.0, 1.0];
        let mut stats = DensifyStats::new(2);
        let mut conf = cfg();
        conf.opacity_reset_interval = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = densify_and_prune(&mut c, &mut state, &mut stats, &conf, 300, 1.0, 64, &mut rng);
        assert!(out.opacity_reset);
        assert!((c.opacity(0) - 0.01).abs() < 1e-12);
        assert!((c.opacity(1) - 0.001).abs() < 1e-12);
        assert_eq!(state.opacity.m, vec![0.0, 0.0]);
    }
}
