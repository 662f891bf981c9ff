//! GAIL training loop: rollout collection, discriminator update, GAE and a
//! TRPO step per iteration, with metrics, checkpoints and evaluation.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::disc::{discriminator_update, gail_reward_from_logit, Discriminator};
use super::gae::{gae_advantages, normalize_advantages};
use super::mlp::Mlp;
use super::optim::{Adam, FixedNorm, RunningNorm};
use super::policy::{Policy, PolicyConfig};
use super::trpo::{trpo_step, TrpoBatch, TrpoConfig};
use crate::error::{Error, Result};
use crate::explore_obj::{oob_penalty, ObjectiveConfig};
use crate::mtu_sim::{ExpertTrajectory, LimbConfig, LimbEnv, OBS_DIM};
use crate::policy_dist::{ActionBox, PolicyFamily};
use crate::synergy::SynergyMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub trpo: TrpoConfig,
    pub steps_per_iter: usize,
    pub total_steps: usize,
    pub normalize_advantages: bool,
    pub disc_hidden: Vec<usize>,
    pub disc_lr: f64,
    pub disc_epochs: usize,
    pub disc_minibatch: usize,
    pub critic_hidden: Vec<usize>,
    pub critic_lr: f64,
    pub critic_epochs: usize,
    pub critic_minibatch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            trpo: TrpoConfig::default(),
            steps_per_iter: 2048,
            total_steps: 200_000,
            normalize_advantages: true,
            disc_hidden: vec![64, 64],
            disc_lr: 3e-4,
            disc_epochs: 1,
            disc_minibatch: 256,
            critic_hidden: vec![64, 64],
            critic_lr: 1e-3,
            critic_epochs: 5,
            critic_minibatch: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("γ must lie in (0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::Config(format!("GAE λ must lie in [0, 1], got {}", self.gae_lambda)));
        }
        self.trpo.validate()?;
        if self.steps_per_iter == 0 || self.disc_minibatch == 0 || self.critic_minibatch == 0 {
            return Err(Error::Config("batch sizes must be ≥ 1".into()));
        }
        if !(self.disc_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        if self.disc_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be nonzero".into()));
        }
        Ok(())
    }
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub env_steps: usize,
    pub task_reward: f64,
    pub episode_length: f64,
    pub episodes: usize,
    pub gail_reward: f64,
    pub oob_penalty: f64,
    pub entropy: f64,
    pub action_mean_abs: f64,
    pub disc_loss: f64,
    pub disc_accuracy: f64,
    pub surrogate: f64,
    pub objective_gain: f64,
    pub kl: f64,
    pub accepted: bool,
    pub entropy_loss: f64,
    pub target_entropy_loss: f64,
    pub flipped_kl_loss: f64,
    pub critic_loss: f64,
    pub beta_projections: usize,
}

pub const METRICS_COLUMNS: [&str; 20] = [
    "iteration",
    "env_steps",
    "task_reward",
    "episode_length",
    "episodes",
    "gail_reward",
    "oob_penalty",
    "entropy",
    "action_mean_abs",
    "disc_loss",
    "disc_accuracy",
    "surrogate",
    "objective_gain",
    "kl",
    "accepted",
    "entropy_loss",
    "target_entropy_loss",
    "flipped_kl_loss",
    "critic_loss",
    "beta_projections",
];

impl MetricsRow {
    pub fn values(&self) -> Vec<f64> {
        vec![
            self.iteration as f64,
            self.env_steps as f64,
            self.task_reward,
            self.episode_length,
            self.episodes as f64,
            self.gail_reward,
            self.oob_penalty,
            self.entropy,
            self.action_mean_abs,
            self.disc_loss,
            self.disc_accuracy,
            self.surrogate,
            self.objective_gain,
            self.kl,
            self.accepted as u8 as f64,
            self.entropy_loss,
            self.target_entropy_loss,
            self.flipped_kl_loss,
            self.critic_loss,
            self.beta_projections as f64,
        ]
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = METRICS_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.values().iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
    out
}

/// Transitions collected in one iteration.
#[derive(Debug, Clone, Default)]
pub struct TransitionBatch {
    pub observations: Vec<Vec<f64>>,
    pub next_observations: Vec<Vec<f64>>,
    /// Actions as sampled, before any clamping.
    pub actions: Vec<Vec<f64>>,
    /// Muscle controls actually applied.
    pub executed: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub task_rewards: Vec<f64>,
    pub oob: Vec<f64>,
    pub rewards: Vec<f64>,
    pub absorbing: Vec<bool>,
    pub ends: Vec<bool>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
    pub gamma: f64,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Maps a policy action to muscle controls.
#[derive(Debug, Clone)]
pub enum ActionSpace {
    Muscles(usize),
    Synergies(Arc<SynergyMap>),
}

impl ActionSpace {
    pub fn bounds(&self) -> ActionBox {
        match self {
            Self::Muscles(n) => ActionBox::unit(*n),
            Self::Synergies(m) => m.action_box.clone(),
        }
    }

    /// Controls executed for `action`; the environment clamps them again.
    pub fn to_controls(&self, action: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Muscles(_) => Ok(action.iter().map(|a| a.clamp(0.0, 1.0)).collect()),
            Self::Synergies(m) => m.to_muscle_space(&m.action_box.clamp(action)),
        }
    }
}

fn critic_value(net: &Mlp, norm: &FixedNorm, scale: f64, obs: &[f64]) -> Result<f64> {
    Ok(scale * net.forward(&norm.apply(obs))?[0])
}

/// Minibatch Adam regression of a scalar network onto `targets`; returns the
/// mean squared error after each epoch.
pub fn fit_value<R: Rng + ?Sized>(
    net: &mut Mlp,
    adam: &mut Adam,
    inputs: &[Vec<f64>],
    targets: &[f64],
    epochs: usize,
    minibatch: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(minibatch.max(1)) {
            let mut g = vec![0.0; net.num_params()];
            for &i in chunk {
                let cache = net.forward_cache(&inputs[i])?;
                let d = 2.0 * (cache.output()[0] - targets[i]) / chunk.len() as f64;
                net.backward(&cache, &[d], &mut g);
            }
            adam.step(&mut net.params, &g);
        }
        let mut s = 0.0;
        for (x, y) in inputs.iter().zip(targets) {
            s += (net.forward(x)?[0] - y).powi(2);
        }
        losses.push(s / inputs.len().max(1) as f64);
    }
    Ok(losses)
}

pub struct Trainer {
    pub env: LimbEnv,
    pub policy: Policy,
    pub critic: Mlp,
    critic_adam: Adam,
    pub disc: Discriminator,
    pub objective: ObjectiveConfig,
    pub action_space: ActionSpace,
    pub cfg: TrainConfig,
    expert_obs: Vec<Vec<f64>>,
    value_scale: f64,
    env_rng: ChaCha8Rng,
    update_rng: ChaCha8Rng,
    obs: Vec<f64>,
    ep_len: usize,
    pub env_steps: usize,
    pub iteration: usize,
}

impl Trainer {
    pub fn new(
        env_cfg: &LimbConfig,
        expert: &ExpertTrajectory,
        policy_cfg: &PolicyConfig,
        objective: &ObjectiveConfig,
        synergy: Option<Arc<SynergyMap>>,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        objective.validate_for(policy_cfg.family)?;
        env_cfg.validate()?;
        if expert.obs_dim() != OBS_DIM {
            return Err(Error::Config(format!(
                "expert observations have {} columns, environment produces {OBS_DIM}",
                expert.obs_dim()
            )));
        }
        if expert.is_empty() {
            return Err(Error::Config("expert dataset is empty".into()));
        }
        let action_space = match synergy {
            Some(m) => {
                if m.num_muscles() != env_cfg.num_muscles() {
                    return Err(Error::Config(format!(
                        "synergy map covers {} muscles, environment has {}",
                        m.num_muscles(),
                        env_cfg.num_muscles()
                    )));
                }
                ActionSpace::Synergies(m)
            }
            None => ActionSpace::Muscles(env_cfg.num_muscles()),
        };
        let bounds = action_space.bounds();
        if let Some(b) = &objective.bounds {
            if b.dim() != bounds.dim() {
                return Err(Error::Config("objective bounds dimension differs from the action space".into()));
            }
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut env_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        env_rng.set_stream(1);
        let mut update_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        update_rng.set_stream(2);
        let expert_obs: Vec<Vec<f64>> = expert.observations().cloned().collect();
        let obs_norm = FixedNorm::fit(&expert_obs);
        let policy = Policy::new(policy_cfg, obs_norm, bounds, &mut init_rng)?;
        let mut sizes = vec![OBS_DIM];
        sizes.extend(&cfg.critic_hidden);
        sizes.push(1);
        let critic = Mlp::init(&sizes, 1.0, &mut init_rng)?;
        let critic_adam = Adam::new(critic.num_params(), cfg.critic_lr);
        let disc = Discriminator::new(OBS_DIM, &cfg.disc_hidden, cfg.disc_lr, &mut init_rng)?;
        let mut env = LimbEnv::new(env_cfg.clone())?;
        let obs = env.reset(&mut env_rng);
        Ok(Self {
            env,
            policy,
            critic,
            critic_adam,
            disc,
            objective: objective.clone(),
            action_space,
            cfg: cfg.clone(),
            expert_obs,
            value_scale: 1.0 / (1.0 - cfg.gamma),
            env_rng,
            update_rng,
            obs,
            ep_len: 0,
            env_steps: 0,
            iteration: 0,
        })
    }

    pub fn done(&self) -> bool {
        self.env_steps >= self.cfg.total_steps
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        critic_value(&self.critic, &self.policy.obs_norm, self.value_scale, obs)
    }

    /// Steps the environment with the current policy, resetting on episode end.
    /// Returns the batch, lengths of finished episodes and the Beta projection count.
    pub fn collect(&mut self, steps: usize) -> Result<(TransitionBatch, Vec<usize>, usize)> {
        let head = self.policy.head()?;
        let bounds = self.objective.bounds.clone().unwrap_or_else(|| self.policy.spec.bounds.clone());
        let mut b = TransitionBatch { gamma: self.cfg.gamma, ..Default::default() };
        let mut finished = vec![];
        let mut projected = 0;
        for t in 0..steps {
            let (action, logp, proj) = self.policy.act(&head, &self.obs, false, &mut self.env_rng)?;
            projected += proj;
            let controls = self.action_space.to_controls(&action)?;
            let tr = self.env.step(&controls)?;
            self.ep_len += 1;
            let oob = if self.objective.mode.uses_oob_penalty() { oob_penalty(&action, &bounds, self.objective.beta_oob) } else { 0.0 };
            b.observations.push(std::mem::replace(&mut self.obs, tr.observation.clone()));
            b.next_observations.push(tr.observation);
            b.actions.push(action);
            b.executed.push(controls);
            b.log_probs.push(logp);
            b.task_rewards.push(tr.task_reward);
            b.oob.push(oob);
            b.absorbing.push(tr.absorbing);
            let episode_over = tr.absorbing || tr.truncated;
            b.ends.push(episode_over || t + 1 == steps);
            if episode_over {
                finished.push(self.ep_len);
                self.ep_len = 0;
                self.obs = self.env.reset(&mut self.env_rng);
            }
        }
        Ok((b, finished, projected))
    }

    fn fit_critic(&mut self, obs: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
        let inputs: Vec<Vec<f64>> = obs.iter().map(|o| self.policy.obs_norm.apply(o)).collect();
        let scaled: Vec<f64> = targets.iter().map(|t| t / self.value_scale).collect();
        let losses = fit_value(
            &mut self.critic,
            &mut self.critic_adam,
            &inputs,
            &scaled,
            self.cfg.critic_epochs,
            self.cfg.critic_minibatch,
            &mut self.update_rng,
        )?;
        Ok(losses.last().copied().unwrap_or(0.0))
    }

    /// Runs one iteration and returns its metrics row and batch.
    pub fn iterate(&mut self) -> Result<(MetricsRow, TransitionBatch)> {
        let steps = self.cfg.steps_per_iter.min(self.cfg.total_steps - self.env_steps.min(self.cfg.total_steps));
        if steps == 0 {
            return Err(Error::State("training budget exhausted".into()));
        }
        let (mut b, finished, projected) = self.collect(steps)?;
        if projected > 0 {
            log::warn!("iteration {}: {projected} Beta dimensions projected onto the variance bound", self.iteration);
        }
        let ds = discriminator_update(
            &mut self.disc,
            &self.expert_obs,
            &b.next_observations,
            self.cfg.disc_epochs,
            self.cfg.disc_minibatch,
            &mut self.update_rng,
        )?;
        let mut gail = Vec::with_capacity(b.len());
        for s in &b.next_observations {
            gail.push(gail_reward_from_logit(self.disc.logit(s)?));
        }
        b.rewards = gail.iter().zip(&b.oob).map(|(g, o)| g + o).collect();
        let values: Vec<f64> = b.observations.iter().map(|o| self.value(o)).collect::<Result<_>>()?;
        let next_values: Vec<f64> = b
            .next_observations
            .iter()
            .zip(&b.absorbing)
            .map(|(o, &a)| if a { Ok(0.0) } else { self.value(o) })
            .collect::<Result<_>>()?;
        let (adv, targets) = gae_advantages(&b.rewards, &values, &next_values, &b.ends, self.cfg.gamma, self.cfg.gae_lambda);
        b.advantages = adv;
        b.value_targets = targets;
        let adv_used = if self.cfg.normalize_advantages { normalize_advantages(&b.advantages) } else { b.advantages.clone() };
        let tb = TrpoBatch { observations: &b.observations, actions: &b.actions, old_log_probs: &b.log_probs, advantages: &adv_used };
        let diag = trpo_step(&mut self.policy, &tb, &self.objective, &self.cfg.trpo, &mut self.update_rng)?;
        let critic_loss = self.fit_critic(&b.observations.clone(), &b.value_targets.clone())?;
        self.env_steps += steps;
        let n = steps as f64;
        let episode_length = if finished.is_empty() {
            self.ep_len as f64
        } else {
            finished.iter().sum::<usize>() as f64 / finished.len() as f64
        };
        let row = MetricsRow {
            iteration: self.iteration,
            env_steps: self.env_steps,
            task_reward: b.task_rewards.iter().sum::<f64>() / n,
            episode_length,
            episodes: finished.len(),
            gail_reward: gail.iter().sum::<f64>() / n,
            oob_penalty: b.oob.iter().sum::<f64>() / n,
            entropy: diag.entropy,
            action_mean_abs: diag.action_mean_abs,
            disc_loss: ds.loss,
            disc_accuracy: ds.accuracy,
            surrogate: diag.surrogate,
            objective_gain: diag.objective_gain,
            kl: diag.kl,
            accepted: diag.accepted,
            entropy_loss: diag.entropy_loss,
            target_entropy_loss: diag.target_entropy_loss,
            flipped_kl_loss: diag.flipped_kl_loss,
            critic_loss,
            beta_projections: projected,
        };
        self.iteration += 1;
        Ok((row, b))
    }

    pub fn checkpoint(&self, config_hash: &str) -> Checkpoint {
        let net = |name: &str, m: &Mlp| NetworkParams {
            name: name.into(),
            sizes: m.sizes().to_vec(),
            names: m.param_names(),
            params: m.params.clone(),
        };
        let mut free_names = vec![];
        for (seg, len) in self.policy.spec.free_segments() {
            free_names.extend((0..len).map(|i| format!("{seg}[{i}]")));
        }
        Checkpoint {
            config_hash: config_hash.into(),
            family: self.policy.spec.family,
            action_low: self.policy.spec.bounds.low.clone(),
            action_high: self.policy.spec.bounds.high.clone(),
            unimodal: self.policy.spec.unimodal,
            entropy_samples: self.policy.spec.entropy_samples,
            env_steps: self.env_steps,
            networks: vec![net("policy", &self.policy.net), net("critic", &self.critic), net("discriminator", &self.disc.net)],
            free_names,
            free_params: self.policy.free.clone(),
            policy_obs_norm: self.policy.obs_norm.clone(),
            disc_obs_norm: self.disc.norm.clone(),
            value_scale: self.value_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParams {
    pub name: String,
    pub sizes: Vec<usize>,
    pub names: Vec<String>,
    pub params: Vec<f64>,
}

/// Named flat parameter vectors of every network plus what is needed to rebuild the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub config_hash: String,
    pub family: PolicyFamily,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub unimodal: bool,
    pub entropy_samples: usize,
    pub env_steps: usize,
    pub networks: Vec<NetworkParams>,
    pub free_names: Vec<String>,
    pub free_params: Vec<f64>,
    pub policy_obs_norm: FixedNorm,
    pub disc_obs_norm: RunningNorm,
    pub value_scale: f64,
}

impl Checkpoint {
    fn network(&self, name: &str) -> Result<Mlp> {
        let n = self
            .networks
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| Error::Parse(format!("checkpoint has no '{name}' network")))?;
        Mlp::from_params(&n.sizes, n.params.clone())
    }

    pub fn policy(&self) -> Result<Policy> {
        let net = self.network("policy")?;
        let bounds = ActionBox::new(self.action_low.clone(), self.action_high.clone())?;
        let latent = net.sizes()[net.sizes().len() - 2];
        let mut spec = crate::policy_dist::HeadSpec::new(self.family, bounds, latent)?;
        spec.unimodal = self.unimodal;
        spec.entropy_samples = self.entropy_samples;
        if net.output_dim() != spec.raw_dim() || self.free_params.len() != spec.free_dim() {
            return Err(Error::Shape("checkpoint policy does not match its distribution head".into()));
        }
        if net.input_dim() != self.policy_obs_norm.mean.len() {
            return Err(Error::Shape("checkpoint observation normalizer does not match the policy input".into()));
        }
        Ok(Policy { spec, net, free: self.free_params.clone(), obs_norm: self.policy_obs_norm.clone() })
    }

    pub fn discriminator(&self) -> Result<Discriminator> {
        let net = self.network("discriminator")?;
        let n = net.num_params();
        Ok(Discriminator { net, norm: self.disc_obs_norm.clone(), adam: Adam::new(n, 1e-3) })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub metrics: Vec<MetricsRow>,
    pub checkpoint: Checkpoint,
}

/// Full training run. Zero total steps returns no metrics and the initial checkpoint.
pub fn train_gail(
    env_cfg: &LimbConfig,
    expert: &ExpertTrajectory,
    policy_cfg: &PolicyConfig,
    objective: &ObjectiveConfig,
    synergy: Option<Arc<SynergyMap>>,
    cfg: &TrainConfig,
    config_hash: &str,
) -> Result<TrainOutput> {
    let mut trainer = Trainer::new(env_cfg, expert, policy_cfg, objective, synergy, cfg)?;
    let mut metrics = vec![];
    while !trainer.done() {
        let (row, _) = trainer.iterate()?;
        log::debug!(
            "iter {} steps {} ep_len {:.1} gail {:.4} H {:.3} |mu| {:.3} kl {:.5}",
            row.iteration,
            row.env_steps,
            row.episode_length,
            row.gail_reward,
            row.entropy,
            row.action_mean_abs,
            row.kl
        );
        metrics.push(row);
    }
    Ok(TrainOutput { metrics, checkpoint: trainer.checkpoint(config_hash) })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_task_reward: f64,
    pub mean_episode_length: f64,
    /// Per-step mean GAIL reward under the supplied discriminator.
    pub mean_gail_reward: f64,
    /// Joint angles of the first episode, one `[q_hip, q_knee]` row per step.
    pub first_episode_joints: Vec<[f64; 2]>,
}

/// Controller used by [`evaluate`].
pub enum Controller<'a> {
    Policy { policy: &'a Policy, action_space: &'a ActionSpace, deterministic: bool },
    /// Independent uniform controls in `[0, 1]` for every muscle.
    Random,
    /// Fixed open-loop control sequence indexed by step.
    Replay(&'a dyn Fn(usize) -> Vec<f64>),
}

/// Rolls out `episodes` episodes (capped by the environment's step limit).
pub fn evaluate(env_cfg: &LimbConfig, controller: &Controller, disc: Option<&Discriminator>, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = LimbEnv::new(env_cfg.clone())?;
    let head = match controller {
        Controller::Policy { policy, .. } => Some(policy.head()?),
        _ => None,
    };
    let mut s = EvalSummary { episodes, ..Default::default() };
    let (mut steps, mut gail) = (0usize, 0.0);
    for ep in 0..episodes {
        let mut obs = env.reset(&mut rng);
        let mut k = 0;
        loop {
            let controls = match controller {
                Controller::Policy { policy, action_space, deterministic } => {
                    let (a, _, _) = policy.act(head.as_ref().unwrap(), &obs, *deterministic, &mut rng)?;
                    action_space.to_controls(&a)?
                }
                Controller::Random => (0..env.num_muscles()).map(|_| rng.random::<f64>()).collect(),
                Controller::Replay(f) => f(k),
            };
            let tr = env.step(&controls)?;
            if ep == 0 {
                let q = env.state().q;
                s.first_episode_joints.push([q[0], q[1]]);
            }
            s.mean_task_reward += tr.task_reward;
            if let Some(d) = disc {
                gail += gail_reward_from_logit(d.logit(&tr.observation)?);
            }
            obs = tr.observation;
            k += 1;
            steps += 1;
            if tr.absorbing || tr.truncated {
                break;
            }
        }
    }
    let e = episodes.max(1) as f64;
    s.mean_task_reward /= e;
    s.mean_episode_length = steps as f64 / e;
    s.mean_gail_reward = if steps > 0 { gail / steps as f64 } else { 0.0 };
    Ok(s)
}

/// GAIL run whose actor draws independent uniform controls in `[0, 1]`.
/// The discriminator, its rng streams and the per-iteration reward bookkeeping
/// match [`Trainer`]; policy-update columns are zero.
pub fn random_baseline_run(env_cfg: &LimbConfig, expert: &ExpertTrajectory, cfg: &TrainConfig) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    env_cfg.validate()?;
    if expert.is_empty() || expert.obs_dim() != OBS_DIM {
        return Err(Error::Config("expert dataset is empty or has the wrong observation width".into()));
    }
    let expert_obs: Vec<Vec<f64>> = expert.observations().cloned().collect();
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut env_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    env_rng.set_stream(1);
    let mut update_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    update_rng.set_stream(2);
    let mut disc = Discriminator::new(OBS_DIM, &cfg.disc_hidden, cfg.disc_lr, &mut init_rng)?;
    let mut env = LimbEnv::new(env_cfg.clone())?;
    env.reset(&mut env_rng);
    let mut ep_len = 0;
    let mut env_steps = 0;
    let mut rows = vec![];
    while env_steps < cfg.total_steps {
        let steps = cfg.steps_per_iter.min(cfg.total_steps - env_steps);
        let mut next = Vec::with_capacity(steps);
        let mut task = 0.0;
        let mut finished = vec![];
        for _ in 0..steps {
            let controls: Vec<f64> = (0..env.num_muscles()).map(|_| env_rng.random::<f64>()).collect();
            let tr = env.step(&controls)?;
            ep_len += 1;
            task += tr.task_reward;
            next.push(tr.observation);
            if tr.absorbing || tr.truncated {
                finished.push(ep_len);
                ep_len = 0;
                env.reset(&mut env_rng);
            }
        }
        let ds = discriminator_update(&mut disc, &expert_obs, &next, cfg.disc_epochs, cfg.disc_minibatch, &mut update_rng)?;
        let mut gail = 0.0;
        for s in &next {
            gail += gail_reward_from_logit(disc.logit(s)?);
        }
        env_steps += steps;
        let n = steps as f64;
        rows.push(MetricsRow {
            iteration: rows.len(),
            env_steps,
            task_reward: task / n,
            episode_length: if finished.is_empty() { ep_len as f64 } else { finished.iter().sum::<usize>() as f64 / finished.len() as f64 },
            episodes: finished.len(),
            gail_reward: gail / n,
            disc_loss: ds.loss,
            disc_accuracy: ds.accuracy,
            accepted: false,
            ..Default::default()
        });
    }
    Ok(rows)
}
