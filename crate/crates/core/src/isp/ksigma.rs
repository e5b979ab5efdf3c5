//! Variance-stabilizing k-sigma transform.
//!
//! With signal-dependent noise `var(x) = k*x + sigma2`, the map
//! `f(x) = x/k + sigma2/k^2` gives `var(f(x)) = f(x)`, independent of the
//! sensor gain that produced `k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raw_io::BayerPlane;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub k: f64,
    pub sigma2: f64,
}

impl NoiseParams {
    pub fn new(k: f64, sigma2: f64) -> Result<Self> {
        let np = NoiseParams { k, sigma2 };
        np.validate()?;
        Ok(np)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise k must be > 0, got {}",
                self.k
            )));
        }
        if !(self.sigma2.is_finite() && self.sigma2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise sigma2 must be >= 0, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        x / self.k + self.sigma2 / (self.k * self.k)
    }

    #[inline]
    pub fn inverse(&self, y: f64) -> f64 {
        self.k * (y - self.sigma2 / (self.k * self.k))
    }

    /// Predicted noise standard deviation at normalized signal `x`.
    pub fn std_at(&self, x: f64) -> f64 {
        (self.k * x.max(0.0) + self.sigma2).sqrt()
    }
}

pub fn ksigma_forward(plane: &BayerPlane, np: &NoiseParams) -> Result<BayerPlane> {
    np.validate()?;
    Ok(BayerPlane {
        data: plane.data.iter().map(|&x| np.forward(x)).collect(),
        ..plane.clone()
    })
}

pub fn ksigma_inverse(plane: &BayerPlane, np: &NoiseParams) -> Result<BayerPlane> {
    np.validate()?;
    Ok(BayerPlane {
        data: plane.data.iter().map(|&y| np.inverse(y)).collect(),
        ..plane.clone()
    })
}
