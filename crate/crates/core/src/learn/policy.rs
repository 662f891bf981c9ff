//! Stochastic policy: an MLP producing the raw head outputs plus the
//! state-independent free parameters of the distribution head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpCache};
use super::optim::FixedNorm;
use crate::error::{Error, Result};
use crate::policy_dist::{ActionBox, HeadSpec, PolicyDistribution, PolicyFamily, PreparedHead};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub family: PolicyFamily,
    pub hidden: Vec<usize>,
    /// Initial action standard deviation.
    pub init_std: f64,
    /// Initial standard deviation of the latent noise (latent family only).
    pub latent_std: f64,
    /// Restrict the Beta mean/std family to unimodal shapes.
    pub unimodal: bool,
    /// Monte-Carlo samples for the squashed Gaussian entropy.
    pub entropy_samples: usize,
    /// Scale of the initial output-layer weights.
    pub output_scale: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            family: PolicyFamily::Gaussian,
            hidden: vec![64, 64],
            init_std: 0.5,
            latent_std: 1.0,
            unimodal: true,
            entropy_samples: 64,
            output_scale: 0.01,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("policy needs at least one nonzero hidden layer".into()));
        }
        if !(self.init_std > 0.0 && self.latent_std > 0.0 && self.output_scale > 0.0) {
            return Err(Error::Config("policy init_std, latent_std and output_scale must be > 0".into()));
        }
        if self.entropy_samples == 0 {
            return Err(Error::Config("entropy_samples must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub spec: HeadSpec,
    pub net: Mlp,
    pub free: Vec<f64>,
    pub obs_norm: FixedNorm,
}

impl Policy {
    /// Fresh policy whose initial mean action sits near the box centre.
    pub fn new<R: Rng + ?Sized>(cfg: &PolicyConfig, obs_norm: FixedNorm, bounds: ActionBox, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let latent_dim = *cfg.hidden.last().unwrap();
        let mut spec = HeadSpec::new(cfg.family, bounds, latent_dim)?;
        spec.unimodal = cfg.unimodal;
        spec.entropy_samples = cfg.entropy_samples;
        let mut sizes = vec![obs_norm.mean.len()];
        sizes.extend(&cfg.hidden);
        sizes.push(spec.raw_dim());
        let mut net = Mlp::init(&sizes, cfg.output_scale, rng)?;
        if matches!(cfg.family, PolicyFamily::Gaussian | PolicyFamily::LatentGaussian) {
            let centre: Vec<f64> = (0..spec.action_dim).map(|i| spec.bounds.center(i)).collect();
            net.output_bias_mut().copy_from_slice(&centre);
        }
        let free = spec.init_free(cfg.init_std, cfg.latent_std);
        Ok(Self { spec, net, free, obs_norm })
    }

    pub fn action_dim(&self) -> usize {
        self.spec.action_dim
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params() + self.free.len()
    }

    /// Network parameters followed by the free head parameters.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.net.params.clone();
        p.extend(&self.free);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::Shape(format!("policy has {} parameters, got {}", self.num_params(), p.len())));
        }
        let n = self.net.num_params();
        self.net.params.copy_from_slice(&p[..n]);
        self.free.copy_from_slice(&p[n..]);
        Ok(())
    }

    pub fn head(&self) -> Result<PreparedHead> {
        let w = (self.spec.family == PolicyFamily::LatentGaussian).then(|| self.net.output_weights());
        self.spec.prepare(&self.free, w.as_ref())
    }

    pub fn forward_cache(&self, obs: &[f64]) -> Result<MlpCache> {
        self.net.forward_cache(&self.obs_norm.apply(obs))
    }

    pub fn raw(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.net.forward(&self.obs_norm.apply(obs))
    }

    /// Samples an action (or returns the mean action when `deterministic`)
    /// with its log-density and the number of projected Beta dimensions.
    pub fn act<R: Rng + ?Sized>(&self, head: &PreparedHead, obs: &[f64], deterministic: bool, rng: &mut R) -> Result<(Vec<f64>, f64, usize)> {
        let raw = self.raw(obs)?;
        let (dist, projected) = head.dist_counted(&raw)?;
        let action = if deterministic { dist.mean_action() } else { dist.sample(rng) };
        let logp = dist.log_density(&action)?;
        Ok((action, logp, projected))
    }
}
