//! Beta distribution on the action box and its mean/std parameterization.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use super::special::{digamma, ln_beta};
use super::{check_action, ActionBox, PolicyDistribution};
use crate::error::{Error, Result};

/// Samples are kept this far from the interval ends.
pub const BETA_EPS: f64 = 1e-12;

/// Fraction of the variance bound used when a request violates it.
pub const PROJECTION_FACTOR: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct BetaDist {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub bounds: ActionBox,
}

impl BetaDist {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>, bounds: ActionBox) -> Result<Self> {
        bounds.validate()?;
        if alpha.len() != beta.len() || alpha.len() != bounds.dim() {
            return Err(Error::Shape("Beta alpha, beta and box dimensions differ".into()));
        }
        if alpha.iter().chain(&beta).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Parameter(format!("Beta parameters must be positive: alpha={alpha:?} beta={beta:?}")));
        }
        Ok(Self { alpha, beta, bounds })
    }

    fn to_unit(&self, i: usize, a: f64) -> f64 {
        (a - self.bounds.low[i]) / self.bounds.width(i)
    }

    pub fn kl(&self, other: &Self) -> Result<f64> {
        if self.bounds != other.bounds {
            return Err(Error::Parameter("KL between Beta distributions on different boxes".into()));
        }
        let mut kl = 0.0;
        for i in 0..self.alpha.len() {
            let (a1, b1, a2, b2) = (self.alpha[i], self.beta[i], other.alpha[i], other.beta[i]);
            kl += ln_beta(a2, b2) - ln_beta(a1, b1)
                + (a1 - a2) * digamma(a1)
                + (b1 - b2) * digamma(b1)
                + (a2 - a1 + b2 - b1) * digamma(a1 + b1);
        }
        Ok(kl)
    }

    pub fn entropy_exact(&self) -> f64 {
        (0..self.alpha.len())
            .map(|i| {
                let (a, b) = (self.alpha[i], self.beta[i]);
                ln_beta(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b)
                    + (a + b - 2.0) * digamma(a + b)
                    + self.bounds.width(i).ln()
            })
            .sum()
    }
}

impl PolicyDistribution for BetaDist {
    fn action_dim(&self) -> usize {
        self.alpha.len()
    }

    fn bounded_support(&self) -> bool {
        true
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.alpha.len())
            .map(|i| {
                // parameters were validated on construction
                let x = Beta::new(self.alpha[i], self.beta[i]).map(|d| d.sample(rng)).unwrap_or(0.5);
                let x = x.clamp(BETA_EPS, 1.0 - BETA_EPS);
                self.bounds.low[i] + x * self.bounds.width(i)
            })
            .collect()
    }

    fn log_density(&self, action: &[f64]) -> Result<f64> {
        check_action(action, self.alpha.len())?;
        let mut lp = 0.0;
        for (i, a) in action.iter().enumerate() {
            let x = self.to_unit(i, *a);
            if !(x > 0.0 && x < 1.0) {
                return Ok(f64::NEG_INFINITY);
            }
            let (al, be) = (self.alpha[i], self.beta[i]);
            lp += (al - 1.0) * x.ln() + (be - 1.0) * (-x).ln_1p() - ln_beta(al, be) - self.bounds.width(i).ln();
        }
        if lp.is_nan() {
            return Err(Error::Numeric(format!("Beta log-density is NaN at {action:?}")));
        }
        Ok(lp)
    }

    fn entropy<R: Rng + ?Sized>(&self, _rng: &mut R) -> f64 {
        self.entropy_exact()
    }

    fn mean_action(&self) -> Vec<f64> {
        (0..self.alpha.len())
            .map(|i| self.bounds.low[i] + self.bounds.width(i) * self.alpha[i] / (self.alpha[i] + self.beta[i]))
            .collect()
    }
}

/// Largest admissible variance at mean `mu`: `μ(1−μ)` in general, or the
/// tighter bound that keeps both shape parameters above one.
pub fn variance_bound(mu: f64, unimodal: bool) -> f64 {
    if unimodal {
        mu * (mu * (1.0 - mu) / (1.0 + mu)).min((1.0 - mu).powi(2) / (2.0 - mu))
    } else {
        mu * (1.0 - mu)
    }
}

/// Derivative of [`variance_bound`] with respect to `mu`.
pub fn variance_bound_grad(mu: f64, unimodal: bool) -> f64 {
    if !unimodal {
        return 1.0 - 2.0 * mu;
    }
    let b1 = mu * mu * (1.0 - mu) / (1.0 + mu);
    let b2 = mu * (1.0 - mu).powi(2) / (2.0 - mu);
    if b1 <= b2 {
        (2.0 * mu - 2.0 * mu * mu - 2.0 * mu.powi(3)) / (1.0 + mu).powi(2)
    } else {
        (2.0 - 8.0 * mu + 8.0 * mu * mu - 2.0 * mu.powi(3)) / (2.0 - mu).powi(2)
    }
}

/// Shape parameters with the given mean and variance.
pub fn alpha_beta_from_mean_var(mu: f64, var: f64) -> (f64, f64) {
    let alpha = ((1.0 - mu) / var - 1.0 / mu) * mu * mu;
    let beta = alpha * (1.0 / mu - 1.0);
    (alpha, beta)
}

fn check_mean_std(mu: f64, sigma: f64) -> Result<()> {
    if !(mu.is_finite() && mu > 0.0 && mu < 1.0) {
        return Err(Error::Parameter(format!("Beta mean must lie in (0, 1), got {mu}")));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Parameter(format!("Beta std must be positive, got {sigma}")));
    }
    Ok(())
}

/// Strict conversion: errors when `σ²` violates the bound.
pub fn beta_from_mean_std(mu: f64, sigma: f64, unimodal: bool) -> Result<(f64, f64)> {
    check_mean_std(mu, sigma)?;
    let bound = variance_bound(mu, unimodal);
    if sigma * sigma >= bound {
        return Err(Error::Parameter(format!(
            "Beta variance {} exceeds the bound {bound} at mean {mu}",
            sigma * sigma
        )));
    }
    Ok(alpha_beta_from_mean_var(mu, sigma * sigma))
}

/// Result of [`beta_from_mean_std_projected`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
    /// Variance actually used.
    pub variance: f64,
    /// The requested variance violated the bound and was scaled down.
    pub projected: bool,
}

/// Training-time conversion: a variance at or above the bound is replaced by
/// `0.99 ×` the bound and flagged instead of failing.
pub fn beta_from_mean_std_projected(mu: f64, sigma: f64, unimodal: bool) -> Result<BetaParams> {
    check_mean_std(mu, sigma)?;
    let bound = variance_bound(mu, unimodal);
    let requested = sigma * sigma;
    let (variance, projected) = if requested < bound { (requested, false) } else { (PROJECTION_FACTOR * bound, true) };
    if projected {
        log::debug!("Beta std {sigma} projected to the bound at mean {mu}");
    }
    let (alpha, beta) = alpha_beta_from_mean_var(mu, variance);
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::Numeric(format!("degenerate Beta parameters at mean {mu}, variance {variance}")));
    }
    Ok(BetaParams { alpha, beta, variance, projected })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_has_zero_log_density_and_entropy() {
        let d = BetaDist::new(vec![1.0], vec![1.0], ActionBox::unit(1)).unwrap();
        for &x in &[0.01, 0.3, 0.99] {
            assert_relative_eq!(d.log_density(&[x]).unwrap(), 0.0, epsilon = 1e-12);
        }
        assert_relative_eq!(d.entropy_exact(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn half_mean_gives_two_two() {
        let (a, b) = beta_from_mean_std(0.5, 0.05f64.sqrt(), false).unwrap();
        assert_relative_eq!(a, 2.0, epsilon = 1e-12);
        assert_relative_eq!(b, 2.0, epsilon = 1e-12);
        assert_relative_eq!(a / (a + b), 0.5);
        assert_relative_eq!(a * b / ((a + b).powi(2) * (a + b + 1.0)), 0.05, epsilon = 1e-14);
    }

    #[test]
    fn unimodal_bound_at_half_is_one_twelfth() {
        assert_relative_eq!(variance_bound(0.5, true), 1.0 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn reflection_swaps_parameters() {
        let (a, b) = beta_from_mean_std(0.3, 0.1, true).unwrap();
        let (a2, b2) = beta_from_mean_std(0.7, 0.1, true).unwrap();
        assert_relative_eq!(a, b2, max_relative = 1e-12);
        assert_relative_eq!(b, a2, max_relative = 1e-12);
    }

    #[test]
    fn violation_is_strict_error_or_projection() {
        assert!(matches!(beta_from_mean_std(0.5, 0.3, true), Err(Error::Parameter(_))));
        let p = beta_from_mean_std_projected(0.5, 0.3, true).unwrap();
        assert!(p.projected);
        assert_relative_eq!(p.variance, 0.99 / 12.0, epsilon = 1e-15);
        assert!(p.alpha > 1.0 && p.beta > 1.0);
    }

    #[test]
    fn bound_gradient_matches_finite_difference() {
        for &mu in &[0.1, 0.3, 0.49, 0.51, 0.8] {
            for &uni in &[true, false] {
                let h = 1e-6;
                let fd = (variance_bound(mu + h, uni) - variance_bound(mu - h, uni)) / (2.0 * h);
                assert_relative_eq!(variance_bound_grad(mu, uni), fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn kl_to_self_is_zero_and_positive_otherwise() {
        let p = BetaDist::new(vec![2.0, 3.5], vec![1.5, 4.0], ActionBox::unit(2)).unwrap();
        let q = BetaDist::new(vec![2.5, 3.0], vec![1.2, 4.4], ActionBox::unit(2)).unwrap();
        assert_relative_eq!(p.kl(&p).unwrap(), 0.0, epsilon = 1e-12);
        assert!(p.kl(&q).unwrap() > 0.0);
    }
}
