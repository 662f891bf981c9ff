//! Muscle-tendon unit simulation and the over-actuated toy limb.

pub mod expert;
pub mod limb;
pub mod muscle;

pub use expert::{
    generate_expert_dataset, rollout_expert, scripted_expert, ExpertConfig, ExpertDatasetConfig, ExpertRollout,
    ExpertTrajectory,
};
pub use limb::{env_step, LimbConfig, LimbEnv, LimbState, StepResult, Transition, OBSERVATION_NAMES, OBS_DIM};
pub use muscle::{activation_step, filter_substeps, flv_components, flv_force, FlvForce, MtuParams, MuscleState};
