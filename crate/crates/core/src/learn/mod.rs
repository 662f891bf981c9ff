//! Adversarial imitation: MLPs, GAE, TRPO and the state-only GAIL loop.

pub mod disc;
pub mod gae;
pub mod mlp;
pub mod optim;
pub mod policy;
pub mod train;
pub mod trpo;

pub use disc::{discriminator_loss_grad, discriminator_update, gail_reward, gail_reward_from_logit, DiscStats, Discriminator};
pub use gae::{gae_advantages, normalize_advantages};
pub use mlp::{Mlp, MlpCache};
pub use optim::{Adam, FixedNorm, RunningNorm};
pub use policy::{Policy, PolicyConfig};
pub use train::{
    evaluate, fit_value, metrics_csv, random_baseline_run, train_gail, ActionSpace, Checkpoint, Controller, EvalSummary, MetricsRow, NetworkParams, TrainConfig,
    TrainOutput, Trainer, TransitionBatch, METRICS_COLUMNS,
};
pub use trpo::{conjugate_gradient, fisher_vector_product, objective_and_grad, trpo_step, TrpoBatch, TrpoConfig, TrpoDiagnostics};
