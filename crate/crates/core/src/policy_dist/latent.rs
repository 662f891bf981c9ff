//! Latent-exploration Gaussian: noise injected in the last hidden layer and
//! mapped through the output weights, `a ~ N(W x, Σ_a + W Σ_x Wᵀ)`.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::special::LN_2PI;
use super::{check_action, PolicyDistribution};
use crate::error::{Error, Result};

/// State-independent covariance shared by every state of a policy.
#[derive(Debug, Clone)]
pub struct LatentCovariance {
    /// Output weights, `action_dim × latent_dim`. Held constant here.
    pub w: DMatrix<f64>,
    pub sigma_x: DVector<f64>,
    pub sigma_a: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub cov_inv: DMatrix<f64>,
    pub log_det: f64,
    chol: Cholesky<f64, Dyn>,
}

impl LatentCovariance {
    pub fn new(w: DMatrix<f64>, sigma_x: DVector<f64>, sigma_a: DVector<f64>) -> Result<Self> {
        let (d, k) = w.shape();
        if sigma_x.len() != k || sigma_a.len() != d {
            return Err(Error::Shape(format!(
                "latent covariance: W is {d}x{k}, sigma_x has {}, sigma_a has {}",
                sigma_x.len(),
                sigma_a.len()
            )));
        }
        if sigma_x.iter().chain(sigma_a.iter()).any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Parameter("latent standard deviations must be positive".into()));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("latent output weights are not finite".into()));
        }
        let sx2 = DMatrix::from_diagonal(&sigma_x.map(|s| s * s));
        let mut cov = &w * sx2 * w.transpose();
        for i in 0..d {
            cov[(i, i)] += sigma_a[i] * sigma_a[i];
        }
        // symmetrize away round-off
        cov = 0.5 * (&cov + cov.transpose());
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::Numeric("latent covariance is not positive definite".into()))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let cov_inv = chol.inverse();
        Ok(Self { w, sigma_x, sigma_a, cov, cov_inv, log_det, chol })
    }

    pub fn action_dim(&self) -> usize {
        self.sigma_a.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.sigma_x.len()
    }

    /// Lower Cholesky factor of the covariance.
    pub fn cholesky_l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn entropy(&self) -> f64 {
        0.5 * (self.action_dim() as f64 * (1.0 + LN_2PI) + self.log_det)
    }
}

#[derive(Debug, Clone)]
pub struct LatentGaussian {
    pub mean: DVector<f64>,
    pub cov: Arc<LatentCovariance>,
}

impl LatentGaussian {
    pub fn new(mean: Vec<f64>, cov: Arc<LatentCovariance>) -> Result<Self> {
        if mean.len() != cov.action_dim() {
            return Err(Error::Shape("latent mean and covariance dimensions differ".into()));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Parameter(format!("non-finite latent mean {mean:?}")));
        }
        Ok(Self { mean: DVector::from_vec(mean), cov })
    }

    /// Samples by perturbing the latent state and then the action:
    /// `a = W (x + σ_x ξ) + b + σ_a ε`.
    pub fn sample_two_stage<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let c = &self.cov;
        let xi = DVector::from_fn(c.latent_dim(), |k, _| c.sigma_x[k] * rng.sample::<f64, _>(StandardNormal));
        let eps = DVector::from_fn(c.action_dim(), |i, _| c.sigma_a[i] * rng.sample::<f64, _>(StandardNormal));
        (&self.mean + &c.w * xi + eps).as_slice().to_vec()
    }

    pub fn kl(&self, other: &Self) -> Result<f64> {
        let d = self.mean.len();
        if other.mean.len() != d {
            return Err(Error::Shape("KL between latent Gaussians of different dimension".into()));
        }
        let diff = &other.mean - &self.mean;
        let tr = (&other.cov.cov_inv * &self.cov.cov).trace();
        let quad = diff.dot(&(&other.cov.cov_inv * &diff));
        Ok(0.5 * (tr + quad - d as f64 + other.cov.log_det - self.cov.log_det))
    }
}

impl PolicyDistribution for LatentGaussian {
    fn action_dim(&self) -> usize {
        self.mean.len()
    }

    fn bounded_support(&self) -> bool {
        false
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.mean + self.cov.chol.l_dirty().lower_triangle() * z).as_slice().to_vec()
    }

    fn log_density(&self, action: &[f64]) -> Result<f64> {
        check_action(action, self.mean.len())?;
        if action.iter().any(|a| a.is_infinite()) {
            return Ok(f64::NEG_INFINITY);
        }
        let r = DVector::from_column_slice(action) - &self.mean;
        let quad = r.dot(&(&self.cov.cov_inv * &r));
        Ok(-0.5 * (quad + self.cov.log_det + self.mean.len() as f64 * LN_2PI))
    }

    fn entropy<R: Rng + ?Sized>(&self, _rng: &mut R) -> f64 {
        self.cov.entropy()
    }

    fn mean_action(&self) -> Vec<f64> {
        self.mean.as_slice().to_vec()
    }
}
