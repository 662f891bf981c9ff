//! Trust-region policy update: natural gradient by conjugate gradient on
//! Fisher-vector products, then a backtracking line search on the
//! importance-weighted surrogate plus exploration terms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::MlpCache;
use super::policy::Policy;
use crate::error::{Error, Result};
use crate::explore_obj::{entropy_bonus, entropy_bonus_grad, flipped_kl_loss, target_entropy_loss, target_entropy_loss_grad, ObjectiveConfig};
use crate::policy_dist::{kl_divergence, ActionDistribution, HeadGrad, PolicyDistribution, PolicyFamily, PreparedHead};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrpoConfig {
    pub max_kl: f64,
    pub cg_iters: usize,
    pub cg_damping: f64,
    pub ls_shrink: f64,
    pub ls_steps: usize,
}

impl Default for TrpoConfig {
    fn default() -> Self {
        Self { max_kl: 0.01, cg_iters: 10, cg_damping: 0.1, ls_shrink: 0.8, ls_steps: 10 }
    }
}

impl TrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_kl > 0.0) {
            return Err(Error::Config(format!("TRPO KL radius must be > 0, got {}", self.max_kl)));
        }
        if !(self.ls_shrink > 0.0 && self.ls_shrink < 1.0) || self.ls_steps == 0 || self.cg_iters == 0 {
            return Err(Error::Config("line-search shrink must lie in (0, 1); CG iterations and line-search steps ≥ 1".into()));
        }
        if !(self.cg_damping >= 0.0) {
            return Err(Error::Config("CG damping must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Solves `A x = b` for symmetric positive definite `A` given only products `A v`.
pub fn conjugate_gradient(mut avp: impl FnMut(&[f64]) -> Vec<f64>, b: &[f64], iters: usize, residual_tol: f64) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = dot(&r, &r);
    for _ in 0..iters {
        if rr < residual_tol {
            break;
        }
        let ap = avp(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let next = dot(&r, &r);
        let beta = next / rr;
        rr = next;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

/// States, sampled actions, behaviour log-probabilities and advantages.
#[derive(Debug, Clone, Copy)]
pub struct TrpoBatch<'a> {
    pub observations: &'a [Vec<f64>],
    pub actions: &'a [Vec<f64>],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrpoDiagnostics {
    pub accepted: bool,
    /// Mean `KL(old ‖ new)` over the batch states after the update.
    pub kl: f64,
    /// Improvement of the full objective.
    pub objective_gain: f64,
    /// Importance-weighted surrogate after the update.
    pub surrogate: f64,
    /// Mean entropy before the update.
    pub entropy: f64,
    /// Mean absolute action mean before the update.
    pub action_mean_abs: f64,
    pub entropy_loss: f64,
    pub target_entropy_loss: f64,
    pub flipped_kl_loss: f64,
    pub step_fraction: f64,
    pub backtracks: usize,
    pub grad_norm: f64,
}

struct Eval {
    objective: f64,
    surrogate: f64,
    entropy: f64,
    entropy_loss: f64,
    target_entropy_loss: f64,
    flipped_kl_loss: f64,
    action_mean_abs: f64,
    dists: Vec<ActionDistribution>,
    grad: Vec<f64>,
    caches: Vec<MlpCache>,
    head: PreparedHead,
}

fn evaluate(policy: &Policy, head: Option<&PreparedHead>, batch: &TrpoBatch, obj: &ObjectiveConfig, noise: &ChaCha8Rng, want_grad: bool) -> Result<Eval> {
    let n = batch.observations.len();
    let nf = n as f64;
    let head = match head {
        Some(h) => h.clone(),
        None => policy.head()?,
    };
    let family = head.family();
    let mut caches = Vec::with_capacity(n);
    let mut raws = Vec::with_capacity(n);
    for o in batch.observations {
        let c = policy.forward_cache(o)?;
        raws.push(c.output().to_vec());
        caches.push(c);
    }
    let mut rng = noise.clone();
    let state_independent = matches!(family, PolicyFamily::Gaussian | PolicyFamily::LatentGaussian);
    let mut ent: Vec<HeadGrad> = Vec::with_capacity(n);
    for (k, raw) in raws.iter().enumerate() {
        if state_independent && k > 0 {
            ent.push(ent[0].clone());
        } else {
            ent.push(head.entropy_grad(raw, &mut rng)?);
        }
    }
    let entropy = ent.iter().map(|e| e.value).sum::<f64>() / nf;
    let entropy_loss = entropy_bonus(entropy, obj);
    let te_loss = target_entropy_loss(entropy, obj);
    let c_h = -entropy_bonus_grad(obj) - target_entropy_loss_grad(entropy, obj);
    let fkl = if obj.mode.uses_flipped_kl() {
        let bounds = obj.bounds.clone().unwrap_or_else(|| policy.spec.bounds.clone());
        Some(flipped_kl_loss(&head, &raws, &bounds, obj.lambda_fkl)?)
    } else {
        None
    };
    let fkl_value = fkl.as_ref().map_or(0.0, |f| f.value);

    let mut surrogate = 0.0;
    let mut dists = Vec::with_capacity(n);
    let mut mean_abs = 0.0;
    let n_net = policy.net.num_params();
    let mut grad = vec![0.0; if want_grad { policy.num_params() } else { 0 }];
    for k in 0..n {
        let raw = &raws[k];
        let g = head.log_prob_grad(raw, &batch.actions[k])?;
        let ratio = (g.value - batch.old_log_probs[k]).exp();
        if !ratio.is_finite() {
            return Err(Error::Numeric(format!("importance ratio overflow at state {k}")));
        }
        surrogate += ratio * batch.advantages[k] / nf;
        let dist = head.dist(raw)?;
        mean_abs += dist.mean_action().iter().map(|v| v.abs()).sum::<f64>() / policy.action_dim() as f64 / nf;
        dists.push(dist);
        if want_grad {
            let w = ratio * batch.advantages[k] / nf;
            let mut g_raw: Vec<f64> = g.raw.iter().zip(&ent[k].raw).map(|(a, e)| w * a + c_h / nf * e).collect();
            if let Some(f) = &fkl {
                g_raw.iter_mut().zip(&f.raw[k]).for_each(|(a, b)| *a -= b);
            }
            policy.net.backward(&caches[k], &g_raw, &mut grad[..n_net]);
            for (i, gf) in grad[n_net..].iter_mut().enumerate() {
                *gf += w * g.free[i] + c_h / nf * ent[k].free[i];
            }
        }
    }
    if want_grad {
        if let Some(f) = &fkl {
            grad[n_net..].iter_mut().zip(&f.free).for_each(|(a, b)| *a -= b);
        }
    }
    Ok(Eval {
        objective: surrogate - entropy_loss - te_loss - fkl_value,
        surrogate,
        entropy,
        entropy_loss,
        target_entropy_loss: te_loss,
        flipped_kl_loss: fkl_value,
        action_mean_abs: mean_abs,
        dists,
        grad,
        caches,
        head,
    })
}

/// Batch-averaged Fisher-vector product at the current parameters, plus damping.
pub fn fisher_vector_product(policy: &Policy, head: &PreparedHead, caches: &[MlpCache], v: &[f64], damping: f64) -> Result<Vec<f64>> {
    let n_net = policy.net.num_params();
    let nf = caches.len() as f64;
    let mut out = vec![0.0; v.len()];
    let (v_net, v_free) = v.split_at(n_net);
    for c in caches {
        let dr = policy.net.jvp(c, v_net);
        let (u_raw, u_free) = head.fisher_vp(c.output(), &dr, v_free)?;
        let scaled: Vec<f64> = u_raw.iter().map(|u| u / nf).collect();
        policy.net.backward(c, &scaled, &mut out[..n_net]);
        out[n_net..].iter_mut().zip(&u_free).for_each(|(o, u)| *o += u / nf);
    }
    out.iter_mut().zip(v).for_each(|(o, x)| *o += damping * x);
    Ok(out)
}

/// Objective value and gradient at the current parameters. A supplied head
/// replaces the one prepared from the policy, which pins the latent
/// covariance while the output weights vary.
pub fn objective_and_grad(
    policy: &Policy,
    head: Option<&PreparedHead>,
    batch: &TrpoBatch,
    obj: &ObjectiveConfig,
    noise: &ChaCha8Rng,
) -> Result<(f64, Vec<f64>)> {
    let e = evaluate(policy, head, batch, obj, noise, true)?;
    Ok((e.objective, e.grad))
}

/// One TRPO update in place. An exhausted line search leaves the policy unchanged.
pub fn trpo_step(policy: &mut Policy, batch: &TrpoBatch, obj: &ObjectiveConfig, cfg: &TrpoConfig, rng: &mut ChaCha8Rng) -> Result<TrpoDiagnostics> {
    let n = batch.observations.len();
    if n == 0 || batch.actions.len() != n || batch.old_log_probs.len() != n || batch.advantages.len() != n {
        return Err(Error::Shape("TRPO batch fields must be nonempty and of equal length".into()));
    }
    // one noise stream shared by every evaluation of this step
    let noise = ChaCha8Rng::seed_from_u64(rng.random());
    let old = evaluate(policy, None, batch, obj, &noise, true)?;
    let mut diag = TrpoDiagnostics {
        entropy: old.entropy,
        action_mean_abs: old.action_mean_abs,
        surrogate: old.surrogate,
        entropy_loss: old.entropy_loss,
        target_entropy_loss: old.target_entropy_loss,
        flipped_kl_loss: old.flipped_kl_loss,
        ..Default::default()
    };
    let g = &old.grad;
    diag.grad_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if diag.grad_norm < 1e-12 {
        return Ok(diag);
    }
    let mut fvp_err = None;
    let x = conjugate_gradient(
        |v| match fisher_vector_product(policy, &old.head, &old.caches, v, cfg.cg_damping) {
            Ok(r) => r,
            Err(e) => {
                fvp_err = Some(e);
                vec![0.0; v.len()]
            }
        },
        g,
        cfg.cg_iters,
        1e-10,
    );
    if let Some(e) = fvp_err {
        return Err(e);
    }
    let fx = fisher_vector_product(policy, &old.head, &old.caches, &x, cfg.cg_damping)?;
    let shs: f64 = 0.5 * x.iter().zip(&fx).map(|(a, b)| a * b).sum::<f64>();
    if !(shs > 0.0) || !shs.is_finite() {
        log::warn!("TRPO: non-positive curvature along the search direction; skipping update");
        return Ok(diag);
    }
    let scale = (cfg.max_kl / shs).sqrt();
    let theta = policy.params();
    let mut frac = 1.0;
    for k in 0..cfg.ls_steps {
        let cand: Vec<f64> = theta.iter().zip(&x).map(|(t, d)| t + frac * scale * d).collect();
        policy.set_params(&cand)?;
        let attempt = policy.head().and_then(|_| evaluate(policy, None, batch, obj, &noise, false));
        if let Ok(new) = attempt {
            let mut kl = 0.0;
            let mut ok = true;
            for (p, q) in old.dists.iter().zip(&new.dists) {
                match kl_divergence(p, q) {
                    Ok(v) if v.is_finite() => kl += v / n as f64,
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            let gain = new.objective - old.objective;
            if ok && gain > 0.0 && kl <= cfg.max_kl {
                diag.accepted = true;
                diag.kl = kl;
                diag.objective_gain = gain;
                diag.surrogate = new.surrogate;
                diag.step_fraction = frac;
                diag.backtracks = k;
                return Ok(diag);
            }
        }
        frac *= cfg.ls_shrink;
    }
    log::info!("TRPO line search exhausted after {} steps; keeping previous policy", cfg.ls_steps);
    policy.set_params(&theta)?;
    diag.backtracks = cfg.ls_steps;
    Ok(diag)
}
