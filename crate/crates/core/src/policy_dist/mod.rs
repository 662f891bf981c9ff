//! Policy distribution families: unbounded, squashed and latent Gaussians and
//! two Beta parameterizations, behind one interface.

pub mod beta;
pub mod gaussian;
pub mod head;
pub mod latent;
pub mod special;
pub mod squashed;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use beta::{beta_from_mean_std, beta_from_mean_std_projected, variance_bound, BetaDist, BetaParams};
pub use gaussian::DiagGaussian;
pub use head::{HeadGrad, HeadSpec, PolicyFamily, PreparedHead};
pub use latent::{LatentCovariance, LatentGaussian};
pub use squashed::SquashedGaussian;

/// Common interface of every action distribution.
pub trait PolicyDistribution {
    fn action_dim(&self) -> usize;

    /// Whether every sample lies inside the action box.
    fn bounded_support(&self) -> bool;

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64>;

    /// Log-density of `action`. Actions outside the support give `Ok(-inf)`;
    /// `Err` is reserved for numeric failure.
    fn log_density(&self, action: &[f64]) -> Result<f64>;

    /// Entropy. Closed-form families ignore `rng`.
    fn entropy<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;

    /// Deterministic action used for evaluation.
    fn mean_action(&self) -> Vec<f64>;
}

/// Axis-aligned action box `[low, high]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionBox {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBox {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        let b = Self { low, high };
        b.validate()?;
        Ok(b)
    }

    pub fn unit(dim: usize) -> Self {
        Self { low: vec![0.0; dim], high: vec![1.0; dim] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.low.len() != self.high.len() {
            return Err(Error::Shape(format!(
                "action box bounds have lengths {} and {}",
                self.low.len(),
                self.high.len()
            )));
        }
        for (i, (l, h)) in self.low.iter().zip(&self.high).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(Error::Domain(format!("action box dim {i}: need low < high, got [{l}, {h}]")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.high[i] - self.low[i]
    }

    pub fn center(&self, i: usize) -> f64 {
        0.5 * (self.low[i] + self.high[i])
    }

    pub fn log_volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i).ln()).sum()
    }

    /// Length of the box diagonal.
    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.dim() && a.iter().enumerate().all(|(i, v)| *v >= self.low[i] && *v <= self.high[i])
    }

    pub fn clamp(&self, a: &[f64]) -> Vec<f64> {
        a.iter().enumerate().map(|(i, v)| v.clamp(self.low[i], self.high[i])).collect()
    }
}

pub(crate) fn check_action(action: &[f64], dim: usize) -> Result<()> {
    if action.len() != dim {
        return Err(Error::Shape(format!("action has length {}, expected {dim}", action.len())));
    }
    if action.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("action contains NaN".into()));
    }
    Ok(())
}

/// A concrete distribution produced by a policy head for one state.
#[derive(Debug, Clone)]
pub enum ActionDistribution {
    Gaussian(DiagGaussian),
    Squashed(SquashedGaussian),
    Beta(BetaDist),
    Latent(LatentGaussian),
}

macro_rules! delegate {
    ($self:ident, $d:ident => $e:expr) => {
        match $self {
            ActionDistribution::Gaussian($d) => $e,
            ActionDistribution::Squashed($d) => $e,
            ActionDistribution::Beta($d) => $e,
            ActionDistribution::Latent($d) => $e,
        }
    };
}

impl PolicyDistribution for ActionDistribution {
    fn action_dim(&self) -> usize {
        delegate!(self, d => d.action_dim())
    }

    fn bounded_support(&self) -> bool {
        delegate!(self, d => d.bounded_support())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        delegate!(self, d => d.sample(rng))
    }

    fn log_density(&self, action: &[f64]) -> Result<f64> {
        delegate!(self, d => d.log_density(action))
    }

    fn entropy<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        delegate!(self, d => d.entropy(rng))
    }

    fn mean_action(&self) -> Vec<f64> {
        delegate!(self, d => d.mean_action())
    }
}

/// `KL(p ‖ q)` between two distributions of the same family.
pub fn kl_divergence(p: &ActionDistribution, q: &ActionDistribution) -> Result<f64> {
    use ActionDistribution as A;
    match (p, q) {
        (A::Gaussian(p), A::Gaussian(q)) => p.kl(q),
        (A::Squashed(p), A::Squashed(q)) => p.kl(q),
        (A::Beta(p), A::Beta(q)) => p.kl(q),
        (A::Latent(p), A::Latent(q)) => p.kl(q),
        _ => Err(Error::Parameter("KL between different distribution families".into())),
    }
}
