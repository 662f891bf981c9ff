//! Adversarial imitation learning on a toy muscle-driven limb.

pub mod error;
pub mod explore_obj;
pub mod learn;
pub mod mtu_sim;
pub mod policy_dist;
pub mod synergy;

pub use error::{Error, Result};
