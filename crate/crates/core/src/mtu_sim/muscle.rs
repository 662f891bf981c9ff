//! Muscle-tendon unit force law and activation dynamics.
//!
//! Force is `F_max * (F_L(L) * F_V(V) * z + F_P(L))` with lengths normalized by
//! the optimal fiber length and velocities in optimal lengths per second.
//! The activation `z` follows a first-order filter of the clamped control with
//! separate activation and deactivation time constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the Gaussian force-length bell.
pub const FL_WIDTH: f64 = 0.45;
/// Maximum shortening velocity in optimal lengths per second.
pub const MAX_SHORTENING_VELOCITY: f64 = 10.0;
/// Curvature of the hyperbolic force-velocity relation.
pub const FV_CURVATURE: f64 = 0.25;
/// Eccentric force plateau of the force-velocity curve.
pub const FV_MAX: f64 = 1.4;

/// Per-muscle constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtuParams {
    pub name: String,
    /// Optimal fiber length in normalized units (the peak of `F_L`).
    #[serde(default = "one")]
    pub optimal_length: f64,
    /// Peak isometric force (N).
    pub max_isometric_force: f64,
    /// Activation time constant (s).
    #[serde(default = "default_tau_act")]
    pub tau_act: f64,
    /// Deactivation time constant (s).
    #[serde(default = "default_tau_deact")]
    pub tau_deact: f64,
    /// Signed lever arm per joint (m). Positive arms produce positive torque.
    pub moment_arms: Vec<f64>,
    /// Passive force per squared normalized stretch, as a fraction of `F_max`.
    #[serde(default = "one")]
    pub passive_stiffness: f64,
    /// Physical optimal fiber length (m); converts joint excursion into stretch.
    #[serde(default = "default_fiber_length")]
    pub fiber_length: f64,
    /// Normalized fiber length with all joints at zero.
    #[serde(default = "one")]
    pub neutral_length: f64,
}

fn one() -> f64 {
    1.0
}
fn default_tau_act() -> f64 {
    0.01
}
fn default_tau_deact() -> f64 {
    0.04
}
fn default_fiber_length() -> f64 {
    0.15
}

impl MtuParams {
    pub fn new(name: impl Into<String>, max_isometric_force: f64, moment_arms: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            optimal_length: 1.0,
            max_isometric_force,
            tau_act: default_tau_act(),
            tau_deact: default_tau_deact(),
            moment_arms,
            passive_stiffness: 1.0,
            fiber_length: default_fiber_length(),
            neutral_length: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("optimal_length", self.optimal_length),
            ("max_isometric_force", self.max_isometric_force),
            ("tau_act", self.tau_act),
            ("tau_deact", self.tau_deact),
            ("fiber_length", self.fiber_length),
            ("neutral_length", self.neutral_length),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("muscle {}: {key} must be > 0, got {v}", self.name)));
            }
        }
        if !(self.passive_stiffness.is_finite() && self.passive_stiffness >= 0.0) {
            return Err(Error::Config(format!(
                "muscle {}: passive_stiffness must be >= 0",
                self.name
            )));
        }
        if !self.moment_arms.iter().all(|r| r.is_finite()) || self.moment_arms.iter().all(|&r| r == 0.0) {
            return Err(Error::Config(format!(
                "muscle {}: needs at least one nonzero finite moment arm",
                self.name
            )));
        }
        Ok(())
    }

    /// Normalized fiber length under the rigid-tendon approximation.
    pub fn fiber_length_at(&self, q: &[f64]) -> f64 {
        let excursion: f64 = self.moment_arms.iter().zip(q).map(|(r, qj)| r * qj).sum();
        self.neutral_length - excursion / self.fiber_length
    }

    /// Normalized fiber velocity (optimal lengths per second).
    pub fn fiber_velocity_at(&self, qd: &[f64]) -> f64 {
        let rate: f64 = self.moment_arms.iter().zip(qd).map(|(r, v)| r * v).sum();
        -rate / self.fiber_length
    }
}

/// Activation, length and velocity of one contractile element.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MuscleState {
    pub activation: f64,
    pub fiber_length: f64,
    pub fiber_velocity: f64,
}

/// Normalized force-length curve, peak 1 at `l = 1`.
pub fn force_length(l: f64) -> f64 {
    let x = (l - 1.0) / FL_WIDTH;
    (-x * x).exp()
}

/// Normalized force-velocity curve. Negative velocity is shortening.
pub fn force_velocity(v: f64) -> f64 {
    let x = v / MAX_SHORTENING_VELOCITY;
    let f = if x < 0.0 {
        (1.0 + x) / (1.0 - x / FV_CURVATURE)
    } else {
        1.0 + (FV_MAX - 1.0) * x / (x + FV_CURVATURE)
    };
    f.clamp(0.0, FV_MAX)
}

/// Quadratic passive element, zero at or below optimal length.
pub fn force_passive(l: f64, stiffness: f64) -> f64 {
    let stretch = (l - 1.0).max(0.0);
    stiffness * stretch * stretch
}

/// Active and passive parts of the muscle force, both in newtons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlvForce {
    pub active: f64,
    pub passive: f64,
}

impl FlvForce {
    pub fn total(&self) -> f64 {
        self.active + self.passive
    }
}

pub fn flv_components(length: f64, velocity: f64, activation: f64, p: &MtuParams) -> Result<FlvForce> {
    if !(length.is_finite() && velocity.is_finite() && activation.is_finite()) {
        return Err(Error::Domain(format!(
            "flv_force: non-finite input (L={length}, V={velocity}, z={activation})"
        )));
    }
    if length <= 0.0 {
        return Err(Error::Domain(format!("flv_force: length must be > 0, got {length}")));
    }
    if !(0.0..=1.0).contains(&activation) {
        return Err(Error::Domain(format!("flv_force: activation {activation} outside [0, 1]")));
    }
    let l = length / p.optimal_length;
    Ok(FlvForce {
        active: p.max_isometric_force * force_length(l) * force_velocity(velocity) * activation,
        passive: p.max_isometric_force * force_passive(l, p.passive_stiffness),
    })
}

/// Total muscle force (N).
pub fn flv_force(length: f64, velocity: f64, activation: f64, p: &MtuParams) -> Result<f64> {
    flv_components(length, velocity, activation, p).map(|f| f.total())
}

/// Time constant of the filter for control `a` and activation `z`.
pub fn filter_time_constant(a: f64, z: f64, p: &MtuParams) -> f64 {
    if a - z > 0.0 {
        p.tau_act * (0.5 + 1.5 * z)
    } else {
        p.tau_deact / (0.5 + 1.5 * z)
    }
}

fn filter_rate(a: f64, z: f64, p: &MtuParams) -> f64 {
    (a - z) / filter_time_constant(a, z, p)
}

/// Number of RK4 sub-steps used to integrate the filter over `dt`.
///
/// At least four, and enough that each sub-step spans at most an eighth of the
/// fastest time constant the filter can reach.
pub fn filter_substeps(dt: f64, p: &MtuParams) -> usize {
    let tau_min = (0.5 * p.tau_act).min(p.tau_deact / 2.0);
    let n = (8.0 * dt / tau_min).ceil();
    if n.is_finite() {
        (n as usize).max(4)
    } else {
        4
    }
}

/// Advances the activation filter by `dt` with the control clamped to `[0, 1]`.
pub fn activation_step(z: f64, a: f64, dt: f64, p: &MtuParams) -> Result<f64> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Config(format!("activation_step: dt must be > 0, got {dt}")));
    }
    if !(z.is_finite() && (0.0..=1.0).contains(&z)) {
        return Err(Error::Domain(format!("activation_step: z={z} outside [0, 1]")));
    }
    if a.is_nan() {
        return Err(Error::Domain("activation_step: control is NaN".into()));
    }
    let a = a.clamp(0.0, 1.0);
    let n = filter_substeps(dt, p);
    Ok(integrate_filter(z, a, dt, n, p))
}

/// Fixed-count RK4 integration of the filter ODE; `a` must already be clamped.
pub fn integrate_filter(mut z: f64, a: f64, dt: f64, substeps: usize, p: &MtuParams) -> f64 {
    let h = dt / substeps as f64;
    for _ in 0..substeps {
        let k1 = filter_rate(a, z, p);
        let k2 = filter_rate(a, z + 0.5 * h * k1, p);
        let k3 = filter_rate(a, z + 0.5 * h * k2, p);
        let k4 = filter_rate(a, z + h * k3, p);
        z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        z = z.clamp(0.0, 1.0);
    }
    z
}
