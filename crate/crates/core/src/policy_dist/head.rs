//! Policy heads: how raw network outputs and state-independent parameters
//! become a distribution, plus the derivatives the learner needs.
//!
//! Raw output layout per family (`D` = action dim, `K` = latent dim):
//!
//! | family | raw outputs | free parameters |
//! |---|---|---|
//! | gaussian | mean (D) | `log_std` (D) |
//! | squashed_gaussian | pre-squash mean (D) | `log_std` (D) |
//! | beta_alpha_beta | α̃ (D), β̃ (D), softplus + 1 | none |
//! | beta_mean_std | mean logit (D) | `std_softplus` (D) |
//! | latent_gaussian | mean `W x + b` (D) | `log_std_action` (D), `log_std_latent` (K) |

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::beta::{alpha_beta_from_mean_var, variance_bound, variance_bound_grad, PROJECTION_FACTOR};
use super::special::{digamma, sigmoid, softplus, softplus_inv, trigamma};
use super::squashed::SQUASH_GUARD;
use super::{
    ActionBox, ActionDistribution, BetaDist, DiagGaussian, LatentCovariance, LatentGaussian, SquashedGaussian,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyFamily {
    Gaussian,
    SquashedGaussian,
    BetaAlphaBeta,
    BetaMeanStd,
    LatentGaussian,
}

impl PolicyFamily {
    pub const ALL: [PolicyFamily; 5] = [
        PolicyFamily::Gaussian,
        PolicyFamily::SquashedGaussian,
        PolicyFamily::BetaAlphaBeta,
        PolicyFamily::BetaMeanStd,
        PolicyFamily::LatentGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyFamily::Gaussian => "gaussian",
            PolicyFamily::SquashedGaussian => "squashed_gaussian",
            PolicyFamily::BetaAlphaBeta => "beta_alpha_beta",
            PolicyFamily::BetaMeanStd => "beta_mean_std",
            PolicyFamily::LatentGaussian => "latent_gaussian",
        }
    }

    pub fn bounded(self) -> bool {
        matches!(self, PolicyFamily::SquashedGaussian | PolicyFamily::BetaAlphaBeta | PolicyFamily::BetaMeanStd)
    }
}

/// Static description of a head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec {
    pub family: PolicyFamily,
    pub action_dim: usize,
    /// Width of the last hidden layer; used by the latent family only.
    pub latent_dim: usize,
    /// Mean/std Beta: enforce the unimodality bound.
    pub unimodal: bool,
    pub bounds: ActionBox,
    /// Monte-Carlo samples for the squashed-Gaussian entropy.
    pub entropy_samples: usize,
}

/// A value and its gradient w.r.t. raw outputs and free parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub value: f64,
    pub raw: Vec<f64>,
    pub free: Vec<f64>,
}

impl HeadSpec {
    pub fn new(family: PolicyFamily, bounds: ActionBox, latent_dim: usize) -> Result<Self> {
        bounds.validate()?;
        if family == PolicyFamily::LatentGaussian && latent_dim == 0 {
            return Err(Error::Config("latent Gaussian head needs a latent dimension".into()));
        }
        Ok(Self {
            family,
            action_dim: bounds.dim(),
            latent_dim,
            unimodal: true,
            bounds,
            entropy_samples: super::squashed::DEFAULT_ENTROPY_SAMPLES,
        })
    }

    pub fn raw_dim(&self) -> usize {
        match self.family {
            PolicyFamily::BetaAlphaBeta => 2 * self.action_dim,
            _ => self.action_dim,
        }
    }

    pub fn free_dim(&self) -> usize {
        self.free_segments().iter().map(|s| s.1).sum()
    }

    /// Named segments of the free parameter vector, in order.
    pub fn free_segments(&self) -> Vec<(&'static str, usize)> {
        let d = self.action_dim;
        match self.family {
            PolicyFamily::Gaussian | PolicyFamily::SquashedGaussian => vec![("log_std", d)],
            PolicyFamily::BetaAlphaBeta => vec![],
            PolicyFamily::BetaMeanStd => vec![("std_softplus", d)],
            PolicyFamily::LatentGaussian => vec![("log_std_action", d), ("log_std_latent", self.latent_dim)],
        }
    }

    /// Initial free parameters giving standard deviation `init_std` (and
    /// `latent_std` for the latent noise).
    pub fn init_free(&self, init_std: f64, latent_std: f64) -> Vec<f64> {
        let d = self.action_dim;
        match self.family {
            PolicyFamily::Gaussian | PolicyFamily::SquashedGaussian => vec![init_std.ln(); d],
            PolicyFamily::BetaAlphaBeta => vec![],
            PolicyFamily::BetaMeanStd => vec![softplus_inv(init_std); d],
            PolicyFamily::LatentGaussian => {
                let mut v = vec![init_std.ln(); d];
                v.extend(std::iter::repeat_n(latent_std.ln(), self.latent_dim));
                v
            }
        }
    }

    /// Binds free parameters (and the detached output weights for the latent family).
    pub fn prepare(&self, free: &[f64], w_x: Option<&DMatrix<f64>>) -> Result<PreparedHead> {
        if free.len() != self.free_dim() {
            return Err(Error::Shape(format!("head expects {} free parameters, got {}", self.free_dim(), free.len())));
        }
        if free.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite policy free parameters".into()));
        }
        let d = self.action_dim;
        let mut head = PreparedHead {
            spec: self.clone(),
            free: free.to_vec(),
            std: vec![],
            latent: None,
            latent_free_fisher: None,
        };
        match self.family {
            PolicyFamily::Gaussian | PolicyFamily::SquashedGaussian => head.std = free.iter().map(|v| v.exp()).collect(),
            PolicyFamily::BetaMeanStd => head.std = free.iter().map(|v| softplus(*v)).collect(),
            PolicyFamily::BetaAlphaBeta => {}
            PolicyFamily::LatentGaussian => {
                let w = w_x.ok_or_else(|| Error::Config("latent head needs the output weights".into()))?;
                if w.shape() != (d, self.latent_dim) {
                    return Err(Error::Shape(format!(
                        "latent output weights are {:?}, expected ({d}, {})",
                        w.shape(),
                        self.latent_dim
                    )));
                }
                let sa = DVector::from_iterator(d, free[..d].iter().map(|v| v.exp()));
                let sx = DVector::from_iterator(self.latent_dim, free[d..].iter().map(|v| v.exp()));
                let cov = LatentCovariance::new(w.clone(), sx, sa)?;
                head.latent_free_fisher = Some(latent_free_fisher(&cov));
                head.latent = Some(Arc::new(cov));
            }
        }
        Ok(head)
    }
}

/// Fisher information of the free parameters of the latent covariance:
/// `F_pq = ½ c_p c_q (u_pᵀ C⁻¹ u_q)²` with `U = [I | W]` and `c = 2σ²`.
fn latent_free_fisher(cov: &LatentCovariance) -> DMatrix<f64> {
    let (d, k) = cov.w.shape();
    let mut u = DMatrix::zeros(d, d + k);
    u.view_mut((0, 0), (d, d)).fill_with_identity();
    u.view_mut((0, d), (d, k)).copy_from(&cov.w);
    let c: Vec<f64> = cov.sigma_a.iter().chain(cov.sigma_x.iter()).map(|s| 2.0 * s * s).collect();
    let a = u.transpose() * &cov.cov_inv * &u;
    DMatrix::from_fn(d + k, d + k, |p, q| 0.5 * c[p] * c[q] * a[(p, q)].powi(2))
}

/// A head with its free parameters bound.
#[derive(Debug, Clone)]
pub struct PreparedHead {
    pub spec: HeadSpec,
    pub free: Vec<f64>,
    std: Vec<f64>,
    latent: Option<Arc<LatentCovariance>>,
    latent_free_fisher: Option<DMatrix<f64>>,
}

/// Shape parameters of one Beta dimension and their Jacobian w.r.t. the two
/// underlying inputs (α̃, β̃ raw outputs, or mean logit and free std).
struct BetaJac {
    alpha: f64,
    beta: f64,
    /// Rows (α, β), columns (first input, second input).
    jac: [[f64; 2]; 2],
    projected: bool,
}

impl PreparedHead {
    pub fn family(&self) -> PolicyFamily {
        self.spec.family
    }

    pub fn latent_covariance(&self) -> Option<&Arc<LatentCovariance>> {
        self.latent.as_ref()
    }

    fn check_raw(&self, raw: &[f64]) -> Result<()> {
        if raw.len() != self.spec.raw_dim() {
            return Err(Error::Shape(format!("head expects {} raw outputs, got {}", self.spec.raw_dim(), raw.len())));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite policy output {raw:?}")));
        }
        Ok(())
    }

    fn beta_jac(&self, raw: &[f64], i: usize) -> BetaJac {
        let d = self.spec.action_dim;
        match self.spec.family {
            PolicyFamily::BetaAlphaBeta => BetaJac {
                alpha: softplus(raw[i]) + 1.0,
                beta: softplus(raw[d + i]) + 1.0,
                jac: [[sigmoid(raw[i]), 0.0], [0.0, sigmoid(raw[d + i])]],
                projected: false,
            },
            PolicyFamily::BetaMeanStd => {
                let mu = sigmoid(raw[i]).clamp(1e-12, 1.0 - 1e-12);
                let dmu = mu * (1.0 - mu);
                let sigma = self.std[i];
                let bound = variance_bound(mu, self.spec.unimodal);
                let requested = sigma * sigma;
                let (v, dv_dr, dv_ds, projected) = if requested < bound {
                    (requested, 0.0, 2.0 * sigma * sigmoid(self.free[i]), false)
                } else {
                    let b = PROJECTION_FACTOR * bound;
                    (b, PROJECTION_FACTOR * variance_bound_grad(mu, self.spec.unimodal) * dmu, 0.0, true)
                };
                let (alpha, beta) = alpha_beta_from_mean_var(mu, v);
                let da_dmu = (2.0 * mu - 3.0 * mu * mu) / v - 1.0;
                let da_dv = -(1.0 - mu) * mu * mu / (v * v);
                let db_dmu = (1.0 - 4.0 * mu + 3.0 * mu * mu) / v + 1.0;
                let db_dv = -(1.0 - mu).powi(2) * mu / (v * v);
                BetaJac {
                    alpha,
                    beta,
                    jac: [
                        [da_dmu * dmu + da_dv * dv_dr, da_dv * dv_ds],
                        [db_dmu * dmu + db_dv * dv_dr, db_dv * dv_ds],
                    ],
                    projected,
                }
            }
            _ => unreachable!("beta_jac on a non-Beta head"),
        }
    }

    /// Builds the distribution for one state.
    pub fn dist(&self, raw: &[f64]) -> Result<ActionDistribution> {
        Ok(self.dist_counted(raw)?.0)
    }

    /// Like [`Self::dist`], also returning how many Beta dimensions had their
    /// variance projected under the bound.
    pub fn dist_counted(&self, raw: &[f64]) -> Result<(ActionDistribution, usize)> {
        self.check_raw(raw)?;
        let d = self.spec.action_dim;
        Ok(match self.spec.family {
            PolicyFamily::Gaussian => (ActionDistribution::Gaussian(DiagGaussian::new(raw.to_vec(), self.std.clone())?), 0),
            PolicyFamily::SquashedGaussian => {
                let mut sq =
                    SquashedGaussian::new(DiagGaussian::new(raw.to_vec(), self.std.clone())?, self.spec.bounds.clone())?;
                sq.entropy_samples = self.spec.entropy_samples;
                (ActionDistribution::Squashed(sq), 0)
            }
            PolicyFamily::BetaAlphaBeta | PolicyFamily::BetaMeanStd => {
                let mut alpha = Vec::with_capacity(d);
                let mut beta = Vec::with_capacity(d);
                let mut projected = 0;
                for i in 0..d {
                    let j = self.beta_jac(raw, i);
                    alpha.push(j.alpha);
                    beta.push(j.beta);
                    projected += j.projected as usize;
                }
                (ActionDistribution::Beta(BetaDist::new(alpha, beta, self.spec.bounds.clone())?), projected)
            }
            PolicyFamily::LatentGaussian => {
                let cov = self.latent.clone().expect("latent head is prepared with a covariance");
                (ActionDistribution::Latent(LatentGaussian::new(raw.to_vec(), cov)?), 0)
            }
        })
    }

    /// Deterministic action for evaluation.
    pub fn mean_action(&self, raw: &[f64]) -> Result<Vec<f64>> {
        use super::PolicyDistribution;
        Ok(self.dist(raw)?.mean_action())
    }

    /// Log-density of `action` and its gradient.
    pub fn log_prob_grad(&self, raw: &[f64], action: &[f64]) -> Result<HeadGrad> {
        use super::PolicyDistribution;
        let dist = self.dist(raw)?;
        let value = dist.log_density(action)?;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("log-density of {action:?} is not finite")));
        }
        let d = self.spec.action_dim;
        let mut g_raw = vec![0.0; self.spec.raw_dim()];
        let mut g_free = vec![0.0; self.spec.free_dim()];
        match &dist {
            ActionDistribution::Gaussian(g) => {
                let (dm, ds) = g.log_density_grad(action);
                g_raw.copy_from_slice(&dm);
                g_free.copy_from_slice(&ds);
            }
            ActionDistribution::Squashed(sq) => {
                let u = sq.unsquash(action).expect("finite density implies in-box action");
                let (dm, ds) = sq.base.log_density_grad(&u);
                g_raw.copy_from_slice(&dm);
                g_free.copy_from_slice(&ds);
            }
            ActionDistribution::Beta(b) => {
                for i in 0..d {
                    let x = (action[i] - b.bounds.low[i]) / b.bounds.width(i);
                    let j = self.beta_jac(raw, i);
                    let s = digamma(j.alpha + j.beta);
                    let ga = s - digamma(j.alpha) + x.ln();
                    let gb = s - digamma(j.beta) + (-x).ln_1p();
                    self.scatter_beta(i, &j, ga, gb, &mut g_raw, &mut g_free);
                }
            }
            ActionDistribution::Latent(l) => {
                let cov = &l.cov;
                let r = DVector::from_column_slice(action) - &l.mean;
                let y = &cov.cov_inv * &r;
                g_raw.copy_from_slice(y.as_slice());
                // dlogp/dC = ½ (y yᵀ − C⁻¹), chained to the log-stds
                let mut gc = &y * y.transpose() - &cov.cov_inv;
                gc *= 0.5;
                g_free.copy_from_slice(&self.cov_grad_to_free(&gc));
            }
        }
        Ok(HeadGrad { value, raw: g_raw, free: g_free })
    }

    fn scatter_beta(&self, i: usize, j: &BetaJac, ga: f64, gb: f64, g_raw: &mut [f64], g_free: &mut [f64]) {
        let d = self.spec.action_dim;
        let g0 = ga * j.jac[0][0] + gb * j.jac[1][0];
        let g1 = ga * j.jac[0][1] + gb * j.jac[1][1];
        match self.spec.family {
            PolicyFamily::BetaAlphaBeta => {
                g_raw[i] += g0;
                g_raw[d + i] += g1;
            }
            _ => {
                g_raw[i] += g0;
                g_free[i] += g1;
            }
        }
    }

    fn gather_beta(&self, i: usize, v_raw: &[f64], v_free: &[f64]) -> [f64; 2] {
        let d = self.spec.action_dim;
        match self.spec.family {
            PolicyFamily::BetaAlphaBeta => [v_raw[i], v_raw[d + i]],
            _ => [v_raw[i], v_free[i]],
        }
    }

    /// Entropy for one state and its gradient. The squashed family uses a
    /// reparameterized Monte-Carlo estimate with noise drawn from `rng`.
    pub fn entropy_grad<R: Rng + ?Sized>(&self, raw: &[f64], rng: &mut R) -> Result<HeadGrad> {
        let dist = self.dist(raw)?;
        let d = self.spec.action_dim;
        let mut g_raw = vec![0.0; self.spec.raw_dim()];
        let mut g_free = vec![0.0; self.spec.free_dim()];
        let value = match &dist {
            ActionDistribution::Gaussian(g) => {
                g_free.iter_mut().for_each(|v| *v = 1.0);
                g.entropy_exact()
            }
            ActionDistribution::Squashed(sq) => {
                let eps = sq.draw_noise(rng);
                let guard_u = SQUASH_GUARD.atanh();
                let n = eps.len() as f64;
                for e in &eps {
                    for i in 0..d {
                        let (m, s) = (sq.base.mean[i], sq.base.std[i]);
                        let u = m + s * e[i];
                        if u.abs() >= guard_u {
                            let z = (u.clamp(-guard_u, guard_u) - m) / s;
                            g_raw[i] -= z / s / n;
                            g_free[i] += (1.0 - z * z) / n;
                        } else {
                            let dt = -2.0 * u.tanh();
                            g_raw[i] += dt / n;
                            g_free[i] += (1.0 + dt * s * e[i]) / n;
                        }
                    }
                }
                sq.entropy_from_noise(&eps)
            }
            ActionDistribution::Beta(b) => {
                for i in 0..d {
                    let j = self.beta_jac(raw, i);
                    let t = trigamma(j.alpha + j.beta);
                    let ga = -(j.alpha - 1.0) * trigamma(j.alpha) + (j.alpha + j.beta - 2.0) * t;
                    let gb = -(j.beta - 1.0) * trigamma(j.beta) + (j.alpha + j.beta - 2.0) * t;
                    self.scatter_beta(i, &j, ga, gb, &mut g_raw, &mut g_free);
                }
                b.entropy_exact()
            }
            ActionDistribution::Latent(l) => {
                let mut gc = l.cov.cov_inv.clone();
                gc *= 0.5;
                g_free.copy_from_slice(&self.cov_grad_to_free(&gc));
                l.cov.entropy()
            }
        };
        Ok(HeadGrad { value, raw: g_raw, free: g_free })
    }

    /// Fisher information at this state applied to a tangent `(v_raw, v_free)`.
    pub fn fisher_vp(&self, raw: &[f64], v_raw: &[f64], v_free: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_raw(raw)?;
        let d = self.spec.action_dim;
        let mut o_raw = vec![0.0; self.spec.raw_dim()];
        let mut o_free = vec![0.0; self.spec.free_dim()];
        match self.spec.family {
            PolicyFamily::Gaussian | PolicyFamily::SquashedGaussian => {
                for i in 0..d {
                    o_raw[i] = v_raw[i] / (self.std[i] * self.std[i]);
                    o_free[i] = 2.0 * v_free[i];
                }
            }
            PolicyFamily::BetaAlphaBeta | PolicyFamily::BetaMeanStd => {
                for i in 0..d {
                    let j = self.beta_jac(raw, i);
                    let v = self.gather_beta(i, v_raw, v_free);
                    // tangent in (α, β)
                    let ta = j.jac[0][0] * v[0] + j.jac[0][1] * v[1];
                    let tb = j.jac[1][0] * v[0] + j.jac[1][1] * v[1];
                    let ts = trigamma(j.alpha + j.beta);
                    let fa = (trigamma(j.alpha) - ts) * ta - ts * tb;
                    let fb = -ts * ta + (trigamma(j.beta) - ts) * tb;
                    self.scatter_beta(i, &j, fa, fb, &mut o_raw, &mut o_free);
                }
            }
            PolicyFamily::LatentGaussian => {
                let cov = self.latent.as_ref().expect("prepared latent head");
                let u = &cov.cov_inv * DVector::from_column_slice(v_raw);
                o_raw.copy_from_slice(u.as_slice());
                let f = self.latent_free_fisher.as_ref().expect("prepared latent head");
                let w = f * DVector::from_column_slice(v_free);
                o_free.copy_from_slice(w.as_slice());
            }
        }
        Ok((o_raw, o_free))
    }

    /// Mean and covariance for the Gaussian families acting directly in the
    /// action space; `None` for bounded families.
    pub fn gaussian_moments(&self, raw: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        match self.spec.family {
            PolicyFamily::Gaussian => Some((
                DVector::from_column_slice(raw),
                DMatrix::from_diagonal(&DVector::from_iterator(raw.len(), self.std.iter().map(|s| s * s))),
            )),
            PolicyFamily::LatentGaussian => {
                let cov = self.latent.as_ref()?;
                Some((DVector::from_column_slice(raw), cov.cov.clone()))
            }
            _ => None,
        }
    }

    /// Chains a gradient w.r.t. the covariance matrix of a Gaussian head to
    /// its free parameters. The output weights are held constant.
    pub fn cov_grad_to_free(&self, g: &DMatrix<f64>) -> Vec<f64> {
        let d = self.spec.action_dim;
        match self.spec.family {
            PolicyFamily::Gaussian => (0..d).map(|i| 2.0 * self.std[i] * self.std[i] * g[(i, i)]).collect(),
            PolicyFamily::LatentGaussian => {
                let cov = self.latent.as_ref().expect("prepared latent head");
                let mut out: Vec<f64> = (0..d).map(|i| 2.0 * cov.sigma_a[i].powi(2) * g[(i, i)]).collect();
                for k in 0..cov.latent_dim() {
                    let wk = cov.w.column(k);
                    let q = wk.dot(&(g * wk));
                    out.push(2.0 * cov.sigma_x[k].powi(2) * q);
                }
                out
            }
            _ => vec![0.0; self.spec.free_dim()],
        }
    }
}
