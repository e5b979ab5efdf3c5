use serde::{Deserialize, Serialize};

/// First and second moments for one parameter class, `stride` values per Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub stride: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn new(stride: usize, n: usize) -> Self {
        Moments {
            stride,
            m: vec![0.0; stride * n],
            v: vec![0.0; stride * n],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len() / self.stride
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Appends zero moments for `count` new Gaussians.
    pub fn extend_zeros(&mut self, count: usize) {
        self.m.resize(self.m.len() + count * self.stride, 0.0);
        self.v.resize(self.v.len() + count * self.stride, 0.0);
    }

    pub fn retain(&mut self, keep: &[bool]) {
        let s = self.stride;
        let filter = |x: &[f64]| -> Vec<f64> {
            x.chunks(s)
                .zip(keep)
                .filter(|(_, k)| **k)
                .flat_map(|(c, _)| c.iter().copied())
                .collect()
        };
        self.m = filter(&self.m);
        self.v = filter(&self.v);
    }

    pub fn reset(&mut self, i: usize) {
        let s = self.stride;
        self.m[i * s..(i + 1) * s].fill(0.0);
        self.v[i * s..(i + 1) * s].fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

/// One bias-corrected Adam update of `params` at step `t` (1-based).
pub fn adam_step(params: &mut [f64], grads: &[f64], moments: &mut Moments, lr: f64, t: u64, hp: &AdamParams) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), moments.m.len());
    let bc1 = 1.0 - hp.beta1.powf(t as f64);
    let bc2 = 1.0 - hp.beta2.powf(t as f64);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(moments.m.iter_mut().zip(moments.v.iter_mut()))
    {
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let mhat = *m / bc1;
        let vhat = *v / bc2;
        *p -= lr * mhat / (vhat.sqrt() + hp.eps);
    }
}

/// Adam state for each parameter class of a Gaussian cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimState {
    pub positions: Moments,
    pub log_scales: Moments,
    pub quaternions: Moments,
    pub sh_dc: Moments,
    pub sh_rest: Moments,
    pub opacity: Moments,
    pub step: u64,
}

impl OptimState {
    pub fn new(n: usize) -> Self {
        OptimState {
            positions: Moments::new(3, n),
            log_scales: Moments::new(3, n),
            quaternions: Moments::new(4, n),
            sh_dc: Moments::new(3, n),
            sh_rest: Moments::new(45, n),
            opacity: Moments::new(1, n),
            step: 0,
        }
    }

    fn all_mut(&mut self) -> [&mut Moments; 6] {
        [
            &mut self.positions,
            &mut self.log_scales,
            &mut self.quaternions,
            &mut self.sh_dc,
            &mut self.sh_rest,
            &mut self.opacity,
        ]
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn extend_zeros(&mut self, count: usize) {
        for m in self.all_mut() {
            m.extend_zeros(count);
        }
    }

    pub fn retain(&mut self, keep: &[bool]) {
        for m in self.all_mut() {
            m.retain(keep);
        }
    }

    /// True when every class tracks `n` Gaussians.
    pub fn is_consistent(&self, n: usize) -> bool {
        [
            &self.positions,
            &self.log_scales,
            &self.quaternions,
            &self.sh_dc,
            &self.sh_rest,
            &self.opacity,
        ]
        .iter()
        .all(|m| m.m.len() == n * m.stride && m.v.len() == n * m.stride)
    }
}
