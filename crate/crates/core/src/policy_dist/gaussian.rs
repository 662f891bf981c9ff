//! Unbounded diagonal Gaussian.

use rand::Rng;
use rand_distr::StandardNormal;

use super::special::LN_2PI;
use super::{check_action, PolicyDistribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::Shape(format!("mean has {} dims but std has {}", mean.len(), std.len())));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Parameter(format!("non-finite Gaussian mean {mean:?}")));
        }
        if std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Parameter(format!("Gaussian std must be positive, got {std:?}")));
        }
        Ok(Self { mean, std })
    }

    /// Log-density of an unconstrained point; shared by the squashed family.
    pub(crate) fn log_density_raw(&self, x: &[f64]) -> f64 {
        let mut lp = 0.0;
        for i in 0..x.len() {
            let z = (x[i] - self.mean[i]) / self.std[i];
            lp += -0.5 * z * z - self.std[i].ln() - 0.5 * LN_2PI;
        }
        lp
    }

    /// Gradient of the log-density w.r.t. the mean and log-std.
    pub fn log_density_grad(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut dm = Vec::with_capacity(x.len());
        let mut ds = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let z = (x[i] - self.mean[i]) / self.std[i];
            dm.push(z / self.std[i]);
            ds.push(z * z - 1.0);
        }
        (dm, ds)
    }

    pub fn entropy_exact(&self) -> f64 {
        self.std.iter().map(|s| 0.5 * (LN_2PI + 1.0) + s.ln()).sum()
    }

    pub fn kl(&self, other: &Self) -> Result<f64> {
        if self.mean.len() != other.mean.len() {
            return Err(Error::Shape("KL between Gaussians of different dimension".into()));
        }
        let mut kl = 0.0;
        for i in 0..self.mean.len() {
            let (s1, s2) = (self.std[i], other.std[i]);
            let d = self.mean[i] - other.mean[i];
            kl += (s2 / s1).ln() + (s1 * s1 + d * d) / (2.0 * s2 * s2) - 0.5;
        }
        Ok(kl)
    }
}

impl PolicyDistribution for DiagGaussian {
    fn action_dim(&self) -> usize {
        self.mean.len()
    }

    fn bounded_support(&self) -> bool {
        false
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| {
                let e: f64 = rng.sample(StandardNormal);
                m + s * e
            })
            .collect()
    }

    fn log_density(&self, action: &[f64]) -> Result<f64> {
        check_action(action, self.mean.len())?;
        if action.iter().any(|a| a.is_infinite()) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(self.log_density_raw(action))
    }

    fn entropy<R: Rng + ?Sized>(&self, _rng: &mut R) -> f64 {
        self.entropy_exact()
    }

    fn mean_action(&self) -> Vec<f64> {
        self.mean.clone()
    }
}
