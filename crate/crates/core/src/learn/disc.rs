//! State-only GAIL discriminator and its reward.

use rand::seq::SliceRandom;
use rand::Rng;

use super::mlp::Mlp;
use super::optim::{Adam, RunningNorm};
use crate::error::{Error, Result};
use crate::policy_dist::special::{sigmoid, softplus};

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub net: Mlp,
    /// Observation statistics shared by expert and policy inputs.
    pub norm: RunningNorm,
    pub adam: Adam,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DiscStats {
    pub loss: f64,
    pub accuracy: f64,
    pub expert_prob: f64,
    pub policy_prob: f64,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, hidden: &[usize], lr: f64, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend(hidden);
        sizes.push(1);
        let net = Mlp::init(&sizes, 1.0, rng)?;
        let n = net.num_params();
        Ok(Self { net, norm: RunningNorm::new(obs_dim), adam: Adam::new(n, lr) })
    }

    pub fn logit(&self, state: &[f64]) -> Result<f64> {
        Ok(self.net.forward(&self.norm.apply(state))?[0])
    }

    /// `D(s) = sigmoid(logit)`, the probability that `s` came from the expert.
    pub fn prob(&self, state: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(state)?))
    }
}

/// `−log(1 − sigmoid(l))` evaluated stably as `softplus(l)`.
pub fn gail_reward_from_logit(logit: f64) -> f64 {
    softplus(logit)
}

pub fn gail_reward(disc: &Discriminator, state: &[f64]) -> Result<f64> {
    Ok(gail_reward_from_logit(disc.logit(state)?))
}

/// Logistic loss `mean_E[−log D] + mean_π[−log(1 − D)]` and its parameter gradient.
pub fn discriminator_loss_grad(net: &Mlp, expert: &[Vec<f64>], policy: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; net.num_params()];
    let mut loss = 0.0;
    for (batch, label) in [(expert, 1.0), (policy, 0.0)] {
        let n = batch.len() as f64;
        for x in batch {
            let cache = net.forward_cache(x)?;
            let l = cache.output()[0];
            // −log D = softplus(−l), −log(1 − D) = softplus(l)
            loss += if label == 1.0 { softplus(-l) } else { softplus(l) } / n;
            let dl = (sigmoid(l) - label) / n;
            net.backward(&cache, &[dl], &mut grad);
        }
    }
    Ok((loss, grad))
}

/// Minibatch Adam steps on the logistic loss, experts labelled 1 and policy
/// states 0. Each epoch visits every policy state once, paired with an equal
/// number of expert states drawn at random.
pub fn discriminator_update<R: Rng + ?Sized>(
    disc: &mut Discriminator,
    expert_states: &[Vec<f64>],
    policy_states: &[Vec<f64>],
    epochs: usize,
    minibatch: usize,
    rng: &mut R,
) -> Result<DiscStats> {
    if expert_states.is_empty() || policy_states.is_empty() {
        return Err(Error::Config("discriminator update needs nonempty expert and policy batches".into()));
    }
    let mb = minibatch.max(1);
    let expert_draw: Vec<usize> = (0..policy_states.len()).map(|_| rng.random_range(0..expert_states.len())).collect();
    for &i in &expert_draw {
        disc.norm.update(&expert_states[i]);
    }
    for s in policy_states {
        disc.norm.update(s);
    }
    let norm_e: Vec<Vec<f64>> = expert_states.iter().map(|s| disc.norm.apply(s)).collect();
    let norm_p: Vec<Vec<f64>> = policy_states.iter().map(|s| disc.norm.apply(s)).collect();
    let mut order: Vec<usize> = (0..norm_p.len()).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb) {
            let pb: Vec<Vec<f64>> = chunk.iter().map(|&i| norm_p[i].clone()).collect();
            let eb: Vec<Vec<f64>> = chunk.iter().map(|_| norm_e[rng.random_range(0..norm_e.len())].clone()).collect();
            let (_, g) = discriminator_loss_grad(&disc.net, &eb, &pb)?;
            disc.adam.step(&mut disc.net.params, &g);
        }
    }
    let eval_e: Vec<Vec<f64>> = expert_draw.iter().map(|&i| norm_e[i].clone()).collect();
    let (loss, _) = discriminator_loss_grad(&disc.net, &eval_e, &norm_p)?;
    let mut correct = 0usize;
    let (mut pe, mut pp) = (0.0, 0.0);
    for x in &eval_e {
        let l = disc.net.forward(x)?[0];
        correct += (l > 0.0) as usize;
        pe += sigmoid(l) / eval_e.len() as f64;
    }
    for x in &norm_p {
        let l = disc.net.forward(x)?[0];
        correct += (l < 0.0) as usize;
        pp += sigmoid(l) / norm_p.len() as f64;
    }
    Ok(DiscStats {
        loss,
        accuracy: correct as f64 / (eval_e.len() + norm_p.len()) as f64,
        expert_prob: pe,
        policy_prob: pp,
    })
}
