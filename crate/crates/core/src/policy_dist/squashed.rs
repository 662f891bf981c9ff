//! Gaussian squashed through `tanh` and rescaled to the action box.

use rand::Rng;
use rand_distr::StandardNormal;

use super::gaussian::DiagGaussian;
use super::special::{ln_sech2, LN_2PI};
use super::{check_action, ActionBox, PolicyDistribution};
use crate::error::{Error, Result};

/// Largest `|tanh u|` ever produced or inverted.
pub const SQUASH_GUARD: f64 = 1.0 - 1e-6;

pub const DEFAULT_ENTROPY_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SquashedGaussian {
    /// Distribution of the pre-squash variable `u`.
    pub base: DiagGaussian,
    pub bounds: ActionBox,
    /// Monte-Carlo sample count for [`PolicyDistribution::entropy`].
    pub entropy_samples: usize,
}

impl SquashedGaussian {
    pub fn new(base: DiagGaussian, bounds: ActionBox) -> Result<Self> {
        bounds.validate()?;
        if bounds.dim() != base.mean.len() {
            return Err(Error::Shape("squashed Gaussian and action box dimensions differ".into()));
        }
        Ok(Self { base, bounds, entropy_samples: DEFAULT_ENTROPY_SAMPLES })
    }

    fn half_width(&self, i: usize) -> f64 {
        0.5 * self.bounds.width(i)
    }

    /// Guarded `tanh(u)` in `(-1, 1)`.
    pub fn squash_unit(u: f64) -> f64 {
        u.tanh().clamp(-SQUASH_GUARD, SQUASH_GUARD)
    }

    pub fn squash(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, v)| self.bounds.low[i] + (Self::squash_unit(*v) + 1.0) * self.half_width(i))
            .collect()
    }

    /// Pre-squash point of an in-box action, `None` outside the open box.
    pub fn unsquash(&self, a: &[f64]) -> Option<Vec<f64>> {
        let mut u = Vec::with_capacity(a.len());
        for (i, v) in a.iter().enumerate() {
            let y = (v - self.bounds.low[i]) / self.half_width(i) - 1.0;
            if !(y > -1.0 && y < 1.0) {
                return None;
            }
            u.push(y.clamp(-SQUASH_GUARD, SQUASH_GUARD).atanh());
        }
        Some(u)
    }

    fn log_jacobian(&self, u: &[f64]) -> f64 {
        u.iter().enumerate().map(|(i, v)| ln_sech2(*v) + self.half_width(i).ln()).sum()
    }

    pub fn kl(&self, other: &Self) -> Result<f64> {
        if self.bounds != other.bounds {
            return Err(Error::Parameter("KL between squashed Gaussians on different boxes".into()));
        }
        // the squash is a bijection, so the divergence is that of the bases
        self.base.kl(&other.base)
    }

    /// `−log π(squash(u))` computed from the pre-squash point. Saturated
    /// coordinates use the guarded inverse, exactly as [`Self::log_density`] does.
    pub fn neg_log_density_at(&self, u: &[f64]) -> f64 {
        let guard_u = SQUASH_GUARD.atanh();
        let mut out = 0.0;
        for (i, &v) in u.iter().enumerate() {
            let v = v.clamp(-guard_u, guard_u);
            let z = (v - self.base.mean[i]) / self.base.std[i];
            out += 0.5 * z * z + self.base.std[i].ln() + 0.5 * LN_2PI + ln_sech2(v) + self.half_width(i).ln();
        }
        out
    }

    /// Monte-Carlo entropy from the given standard-normal draws, one row per sample.
    pub fn entropy_from_noise(&self, eps: &[Vec<f64>]) -> f64 {
        let mut acc = 0.0;
        for e in eps {
            let u: Vec<f64> = (0..e.len()).map(|i| self.base.mean[i] + self.base.std[i] * e[i]).collect();
            acc += self.neg_log_density_at(&u);
        }
        acc / eps.len() as f64
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let d = self.base.mean.len();
        (0..self.entropy_samples.max(1)).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect()
    }
}

impl PolicyDistribution for SquashedGaussian {
    fn action_dim(&self) -> usize {
        self.base.mean.len()
    }

    fn bounded_support(&self) -> bool {
        true
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.squash(&self.base.sample(rng))
    }

    fn log_density(&self, action: &[f64]) -> Result<f64> {
        check_action(action, self.action_dim())?;
        match self.unsquash(action) {
            None => Ok(f64::NEG_INFINITY),
            Some(u) => {
                let lp = self.base.log_density_raw(&u) - self.log_jacobian(&u);
                if lp.is_nan() {
                    Err(Error::Numeric(format!("squashed log-density is NaN at {action:?}")))
                } else {
                    Ok(lp)
                }
            }
        }
    }

    fn entropy<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let eps = self.draw_noise(rng);
        self.entropy_from_noise(&eps)
    }

    fn mean_action(&self) -> Vec<f64> {
        self.squash(&self.base.mean)
    }
}
