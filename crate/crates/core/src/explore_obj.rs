//! Exploration objectives: entropy bonus, target entropy, flipped uniform KL
//! and the squared out-of-bounds penalty.
//!
//! Loss-valued terms are returned in minimization form so they add directly to
//! the negated surrogate.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy_dist::special::LN_2PI;
use crate::policy_dist::{ActionBox, PolicyFamily, PreparedHead};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectiveMode {
    #[serde(rename = "entropy")]
    Entropy,
    #[serde(rename = "none")]
    None,
    #[serde(rename = "target_entropy")]
    TargetEntropy,
    #[serde(rename = "flipped_kl")]
    FlippedKl,
    #[serde(rename = "flipped_kl+target_entropy")]
    FlippedKlTargetEntropy,
    #[serde(rename = "oob_penalty+entropy")]
    OobPenaltyEntropy,
}

impl ObjectiveMode {
    pub const ALL: [ObjectiveMode; 6] = [
        ObjectiveMode::Entropy,
        ObjectiveMode::None,
        ObjectiveMode::TargetEntropy,
        ObjectiveMode::FlippedKl,
        ObjectiveMode::FlippedKlTargetEntropy,
        ObjectiveMode::OobPenaltyEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveMode::Entropy => "entropy",
            ObjectiveMode::None => "none",
            ObjectiveMode::TargetEntropy => "target_entropy",
            ObjectiveMode::FlippedKl => "flipped_kl",
            ObjectiveMode::FlippedKlTargetEntropy => "flipped_kl+target_entropy",
            ObjectiveMode::OobPenaltyEntropy => "oob_penalty+entropy",
        }
    }

    pub fn uses_entropy(self) -> bool {
        matches!(self, ObjectiveMode::Entropy | ObjectiveMode::OobPenaltyEntropy)
    }

    pub fn uses_target_entropy(self) -> bool {
        matches!(self, ObjectiveMode::TargetEntropy | ObjectiveMode::FlippedKlTargetEntropy)
    }

    pub fn uses_flipped_kl(self) -> bool {
        matches!(self, ObjectiveMode::FlippedKl | ObjectiveMode::FlippedKlTargetEntropy)
    }

    pub fn uses_oob_penalty(self) -> bool {
        matches!(self, ObjectiveMode::OobPenaltyEntropy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub mode: ObjectiveMode,
    /// Entropy bonus coefficient λ.
    pub lambda: f64,
    pub lambda_te: f64,
    pub h_target: f64,
    pub lambda_fkl: f64,
    /// Out-of-bounds penalty scale β.
    pub beta_oob: f64,
    /// Action box for the KL and the penalty; the policy's box when absent.
    pub bounds: Option<ActionBox>,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            mode: ObjectiveMode::Entropy,
            lambda: 0.001,
            lambda_te: 1.0,
            h_target: 0.0,
            lambda_fkl: 0.01,
            beta_oob: 0.1,
            bounds: None,
        }
    }
}

impl ObjectiveConfig {
    pub fn with_mode(mode: ObjectiveMode) -> Self {
        Self { mode, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("lambda_te", self.lambda_te),
            ("lambda_fkl", self.lambda_fkl),
            ("beta_oob", self.beta_oob),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("objective coefficient {name} must be >= 0, got {v}")));
            }
        }
        if !self.h_target.is_finite() {
            return Err(Error::Config("h_target must be finite".into()));
        }
        if let Some(b) = &self.bounds {
            b.validate().map_err(|e| Error::Config(format!("objective bounds: {e}")))?;
        }
        Ok(())
    }

    /// Rejects objective/family combinations that are not defined.
    pub fn validate_for(&self, family: PolicyFamily) -> Result<()> {
        self.validate()?;
        if self.mode.uses_flipped_kl() && !matches!(family, PolicyFamily::Gaussian | PolicyFamily::LatentGaussian) {
            return Err(Error::Config(format!(
                "objective '{}' needs an unbounded Gaussian policy, not '{}'",
                self.mode.name(),
                family.name()
            )));
        }
        Ok(())
    }
}

/// `−λ H` when the mode uses the entropy bonus, else zero.
pub fn entropy_bonus(entropy: f64, cfg: &ObjectiveConfig) -> f64 {
    if cfg.mode.uses_entropy() {
        -cfg.lambda * entropy
    } else {
        0.0
    }
}

/// Derivative of [`entropy_bonus`] w.r.t. the entropy.
pub fn entropy_bonus_grad(cfg: &ObjectiveConfig) -> f64 {
    if cfg.mode.uses_entropy() {
        -cfg.lambda
    } else {
        0.0
    }
}

/// `λ_TE (H − h_target)²` when the mode uses a target entropy, else zero.
pub fn target_entropy_loss(entropy: f64, cfg: &ObjectiveConfig) -> f64 {
    if cfg.mode.uses_target_entropy() {
        cfg.lambda_te * (entropy - cfg.h_target).powi(2)
    } else {
        0.0
    }
}

pub fn target_entropy_loss_grad(entropy: f64, cfg: &ObjectiveConfig) -> f64 {
    if cfg.mode.uses_target_entropy() {
        2.0 * cfg.lambda_te * (entropy - cfg.h_target)
    } else {
        0.0
    }
}

fn check_box_and_dims(mean: &[f64], cov: &DMatrix<f64>, bounds: &ActionBox) -> Result<()> {
    let d = mean.len();
    if cov.shape() != (d, d) || bounds.dim() != d {
        return Err(Error::Shape(format!(
            "KL inputs: mean {d}, covariance {:?}, box {}",
            cov.shape(),
            bounds.dim()
        )));
    }
    if bounds.low.iter().zip(&bounds.high).any(|(l, h)| !(h - l > 0.0) || !l.is_finite() || !h.is_finite()) {
        return Err(Error::Domain("uniform box has zero volume".into()));
    }
    Ok(())
}

fn factor(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let chol = Cholesky::new(cov.clone())
        .ok_or_else(|| Error::Domain("Gaussian covariance is not positive definite".into()))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok((chol.inverse(), log_det))
}

/// The three parts of the closed form: `log u + ½ log|Σ| + ½|A| log 2π`, the
/// diagonal sum and the `p ≠ q` sum (each already scaled by `½ u`).
fn kl_terms(mean: &[f64], cov: &DMatrix<f64>, bounds: &ActionBox) -> Result<(f64, f64, f64)> {
    check_box_and_dims(mean, cov, bounds)?;
    let d = mean.len();
    let (inv, log_det) = factor(cov)?;
    // bounds shifted by the mean
    let a: Vec<f64> = (0..d).map(|i| bounds.low[i] - mean[i]).collect();
    let b: Vec<f64> = (0..d).map(|i| bounds.high[i] - mean[i]).collect();
    let width: Vec<f64> = (0..d).map(|i| b[i] - a[i]).collect();
    let log_u = -width.iter().map(|w| w.ln()).sum::<f64>();
    let u = log_u.exp();
    let prod_except = |skip: &[usize]| -> f64 { (0..d).filter(|i| !skip.contains(i)).map(|i| width[i]).product() };
    let mut diag = 0.0;
    for p in 0..d {
        diag += prod_except(&[p]) * inv[(p, p)] * (b[p].powi(3) - a[p].powi(3)) / 3.0;
    }
    let mut cross = 0.0;
    for p in 0..d {
        for q in 0..d {
            if p != q {
                cross += prod_except(&[p, q])
                    * inv[(p, q)]
                    * (b[p] * b[p] - a[p] * a[p])
                    * (b[q] * b[q] - a[q] * a[q])
                    / 4.0;
            }
        }
    }
    Ok((log_u + 0.5 * log_det + 0.5 * d as f64 * LN_2PI, 0.5 * u * diag, 0.5 * u * cross))
}

/// `KL(U ‖ N(μ, Σ))` for the uniform distribution on `bounds`, evaluated term
/// by term in closed form with the box shifted by the mean. The cross term
/// over `p ≠ q` is included and vanishes for diagonal `Σ`.
pub fn kl_uniform_to_gaussian(mean: &[f64], cov: &DMatrix<f64>, bounds: &ActionBox) -> Result<f64> {
    let (base, diag, cross) = kl_terms(mean, cov, bounds)?;
    Ok(base + diag + cross)
}

/// Only the `p ≠ q` term of [`kl_uniform_to_gaussian`].
pub fn kl_cross_term(mean: &[f64], cov: &DMatrix<f64>, bounds: &ActionBox) -> Result<f64> {
    Ok(kl_terms(mean, cov, bounds)?.2)
}

/// Value and gradients of `KL(U ‖ N(μ, Σ))` w.r.t. `μ` and `Σ`, from
/// `½ log|2πΣ| − log vol + ½ tr(Σ⁻¹ S)` with `S = E_U[(x−μ)(x−μ)ᵀ]`.
pub fn kl_uniform_to_gaussian_grad(
    mean: &[f64],
    cov: &DMatrix<f64>,
    bounds: &ActionBox,
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    check_box_and_dims(mean, cov, bounds)?;
    let d = mean.len();
    let (inv, log_det) = factor(cov)?;
    let r = DVector::from_fn(d, |i, _| bounds.center(i) - mean[i]);
    let mut s = &r * r.transpose();
    for i in 0..d {
        s[(i, i)] += bounds.width(i).powi(2) / 12.0;
    }
    let value = -bounds.log_volume() + 0.5 * log_det + 0.5 * d as f64 * LN_2PI + 0.5 * (&inv * &s).trace();
    let d_mean = -(&inv * &r);
    let d_cov = 0.5 * (&inv - &inv * &s * &inv);
    Ok((value, d_mean, d_cov))
}

/// Flipped-KL loss over a batch of states and its gradient.
#[derive(Debug, Clone)]
pub struct FlippedKlLoss {
    pub value: f64,
    /// Gradient w.r.t. each state's raw head outputs.
    pub raw: Vec<Vec<f64>>,
    pub free: Vec<f64>,
}

/// `λ_FKL · mean_s KL(U ‖ π(·|s))` for an unbounded Gaussian head.
pub fn flipped_kl_loss(head: &PreparedHead, raws: &[Vec<f64>], bounds: &ActionBox, lambda_fkl: f64) -> Result<FlippedKlLoss> {
    if !matches!(head.family(), PolicyFamily::Gaussian | PolicyFamily::LatentGaussian) {
        return Err(Error::Config(format!(
            "flipped KL objective is undefined for the bounded family '{}'",
            head.family().name()
        )));
    }
    if raws.is_empty() {
        return Ok(FlippedKlLoss { value: 0.0, raw: vec![], free: vec![0.0; head.spec.free_dim()] });
    }
    let n = raws.len() as f64;
    let d = head.spec.action_dim;
    let mut value = 0.0;
    let mut raw_grads = Vec::with_capacity(raws.len());
    let mut g_cov = DMatrix::zeros(d, d);
    for raw in raws {
        let (m, c) = head.gaussian_moments(raw).expect("Gaussian family");
        let (v, dm, dc) = kl_uniform_to_gaussian_grad(m.as_slice(), &c, bounds)?;
        value += v;
        raw_grads.push((dm * (lambda_fkl / n)).as_slice().to_vec());
        g_cov += dc;
    }
    g_cov *= lambda_fkl / n;
    Ok(FlippedKlLoss { value: lambda_fkl * value / n, raw: raw_grads, free: head.cov_grad_to_free(&g_cov) })
}

/// Squared out-of-bounds penalty `β Σ_i r_i` (always ≤ 0).
pub fn oob_penalty(action: &[f64], bounds: &ActionBox, beta: f64) -> f64 {
    let mut r = 0.0;
    for (i, a) in action.iter().enumerate() {
        let (b, c) = (bounds.low[i], bounds.high[i]);
        if *a < b {
            r -= (a - b).powi(2);
        } else if *a > c {
            r -= (a - c).powi(2);
        }
    }
    beta * r
}
