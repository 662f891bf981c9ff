//! Planar two-link limb hanging from a fixed hip, driven by muscle-tendon units.
//!
//! Angles are measured from the downward vertical: `q[0]` is the hip angle of
//! the thigh, `q[1]` the knee angle of the shank relative to the thigh.
//! Positive angles rotate forward (towards +x).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::muscle::{activation_step, flv_force, MtuParams, MuscleState};
use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 2;

/// Column names of the observation vector, in order.
pub const OBSERVATION_NAMES: [&str; 6] = [
    "hip_angle",
    "knee_angle",
    "hip_velocity",
    "knee_velocity",
    "tip_height",
    "tip_velocity_x",
];
pub const OBS_DIM: usize = OBSERVATION_NAMES.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimbConfig {
    pub link_lengths: [f64; NUM_JOINTS],
    pub link_masses: [f64; NUM_JOINTS],
    /// Gravitational acceleration (m/s^2); zero gives a gravity-free limb.
    pub gravity: f64,
    /// Viscous joint damping (N m s / rad).
    pub joint_damping: f64,
    /// Control step (s).
    pub dt: f64,
    /// Semi-implicit Euler sub-steps per control step.
    pub physics_substeps: usize,
    /// Episode terminates when any |q| exceeds this (rad).
    pub joint_limit: f64,
    /// Episode terminates when the tip drops below this height relative to the hip (m).
    pub min_tip_height: f64,
    /// Target horizontal tip velocity of the task reward (m/s).
    pub target_velocity: f64,
    pub initial_angles: [f64; NUM_JOINTS],
    /// Half-width of the uniform noise added to the initial angles (rad).
    pub initial_noise: f64,
    pub max_episode_steps: usize,
    pub muscles: Vec<MtuParams>,
}

impl Default for LimbConfig {
    fn default() -> Self {
        Self {
            link_lengths: [0.4, 0.4],
            link_masses: [2.0, 1.5],
            gravity: 9.81,
            joint_damping: 1.0,
            dt: 0.01,
            physics_substeps: 4,
            joint_limit: 2.5,
            min_tip_height: -0.75,
            target_velocity: 0.0,
            initial_angles: [0.9, -0.6],
            initial_noise: 0.05,
            max_episode_steps: 1000,
            muscles: default_muscles(),
        }
    }
}

/// Index ranges of the four agonist groups in [`default_muscles`].
pub const HIP_FLEXORS: std::ops::Range<usize> = 0..3;
pub const HIP_EXTENSORS: std::ops::Range<usize> = 3..6;
pub const KNEE_EXTENSORS: std::ops::Range<usize> = 6..9;
pub const KNEE_FLEXORS: std::ops::Range<usize> = 9..12;

/// Twelve single-joint muscles: three agonists and three antagonists per joint.
pub fn default_muscles() -> Vec<MtuParams> {
    let arms = [0.04, 0.05, 0.06];
    let forces = [800.0, 600.0, 500.0];
    let mut out = Vec::with_capacity(12);
    let groups: [(&str, usize, f64); 4] = [
        ("hip_flex", 0, 1.0),
        ("hip_ext", 0, -1.0),
        ("knee_ext", 1, 1.0),
        ("knee_flex", 1, -1.0),
    ];
    for (prefix, joint, sign) in groups {
        for k in 0..3 {
            let mut r = vec![0.0; NUM_JOINTS];
            r[joint] = sign * arms[k];
            out.push(MtuParams::new(format!("{prefix}_{}", k + 1), forces[k], r));
        }
    }
    out
}

impl LimbConfig {
    pub fn num_muscles(&self) -> usize {
        self.muscles.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.muscles.is_empty() {
            return Err(Error::Config("limb needs at least one muscle".into()));
        }
        for m in &self.muscles {
            m.validate()?;
            if m.moment_arms.len() != NUM_JOINTS {
                return Err(Error::Config(format!(
                    "muscle {}: expected {NUM_JOINTS} moment arms, got {}",
                    m.name,
                    m.moment_arms.len()
                )));
            }
        }
        let positive = [
            ("dt", self.dt),
            ("link_lengths[0]", self.link_lengths[0]),
            ("link_lengths[1]", self.link_lengths[1]),
            ("link_masses[0]", self.link_masses[0]),
            ("link_masses[1]", self.link_masses[1]),
            ("joint_limit", self.joint_limit),
        ];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{k} must be > 0, got {v}")));
            }
        }
        if self.physics_substeps == 0 {
            return Err(Error::Config("physics_substeps must be >= 1".into()));
        }
        if self.max_episode_steps == 0 {
            return Err(Error::Config("max_episode_steps must be >= 1".into()));
        }
        if !(self.gravity >= 0.0 && self.joint_damping >= 0.0 && self.initial_noise >= 0.0) {
            return Err(Error::Config("gravity, joint_damping and initial_noise must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimbState {
    pub q: [f64; NUM_JOINTS],
    pub qd: [f64; NUM_JOINTS],
    pub muscles: Vec<MuscleState>,
    pub t: f64,
}

impl LimbState {
    /// Rest state at the given angles with zero velocity and activation.
    pub fn at_rest(cfg: &LimbConfig, q: [f64; NUM_JOINTS]) -> Self {
        let qd = [0.0; NUM_JOINTS];
        let muscles = cfg
            .muscles
            .iter()
            .map(|m| MuscleState {
                activation: 0.0,
                fiber_length: m.fiber_length_at(&q),
                fiber_velocity: 0.0,
            })
            .collect();
        Self { q, qd, muscles, t: 0.0 }
    }

    pub fn activations(&self) -> Vec<f64> {
        self.muscles.iter().map(|m| m.activation).collect()
    }

    /// Tip position relative to the hip.
    pub fn tip_position(&self, cfg: &LimbConfig) -> [f64; 2] {
        let [l1, l2] = cfg.link_lengths;
        let a = self.q[0];
        let b = self.q[0] + self.q[1];
        [l1 * a.sin() + l2 * b.sin(), -l1 * a.cos() - l2 * b.cos()]
    }

    pub fn tip_velocity(&self, cfg: &LimbConfig) -> [f64; 2] {
        let [l1, l2] = cfg.link_lengths;
        let a = self.q[0];
        let b = self.q[0] + self.q[1];
        let wa = self.qd[0];
        let wb = self.qd[0] + self.qd[1];
        [l1 * a.cos() * wa + l2 * b.cos() * wb, l1 * a.sin() * wa + l2 * b.sin() * wb]
    }

    /// Observation vector laid out as [`OBSERVATION_NAMES`].
    pub fn observation(&self, cfg: &LimbConfig) -> Vec<f64> {
        let tip = self.tip_position(cfg);
        let vel = self.tip_velocity(cfg);
        vec![self.q[0], self.q[1], self.qd[0], self.qd[1], tip[1], vel[0]]
    }

    pub fn kinetic_energy(&self, cfg: &LimbConfig) -> f64 {
        let m = mass_matrix(cfg, &self.q);
        let [w1, w2] = self.qd;
        0.5 * (m[0][0] * w1 * w1 + 2.0 * m[0][1] * w1 * w2 + m[1][1] * w2 * w2)
    }

    pub fn potential_energy(&self, cfg: &LimbConfig) -> f64 {
        let [l1, l2] = cfg.link_lengths;
        let [m1, m2] = cfg.link_masses;
        let a = self.q[0];
        let b = self.q[0] + self.q[1];
        -cfg.gravity * (m1 * 0.5 * l1 * a.cos() + m2 * (l1 * a.cos() + 0.5 * l2 * b.cos()))
    }

    /// Elastic energy stored in the passive elements (J).
    pub fn passive_energy(&self, cfg: &LimbConfig) -> f64 {
        cfg.muscles
            .iter()
            .map(|m| {
                let stretch = (m.fiber_length_at(&self.q) / m.optimal_length - 1.0).max(0.0);
                m.max_isometric_force * m.passive_stiffness * stretch.powi(3) / 3.0
                    * m.optimal_length
                    * m.fiber_length
            })
            .sum()
    }

    /// Kinetic plus gravitational plus passive elastic energy.
    pub fn mechanical_energy(&self, cfg: &LimbConfig) -> f64 {
        self.kinetic_energy(cfg) + self.potential_energy(cfg) + self.passive_energy(cfg)
    }

    fn dump(&self) -> String {
        format!(
            "t={:.4} q={:?} qd={:?} activations={:?}",
            self.t,
            self.q,
            self.qd,
            self.activations()
        )
    }
}

/// Joint-space mass matrix of two uniform rods.
pub fn mass_matrix(cfg: &LimbConfig, q: &[f64; NUM_JOINTS]) -> [[f64; 2]; 2] {
    let [l1, l2] = cfg.link_lengths;
    let [m1, m2] = cfg.link_masses;
    let (c1, c2) = (0.5 * l1, 0.5 * l2);
    let (i1, i2) = (m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0);
    let cos2 = q[1].cos();
    let m11 = i1 + i2 + m1 * c1 * c1 + m2 * (l1 * l1 + c2 * c2 + 2.0 * l1 * c2 * cos2);
    let m12 = i2 + m2 * (c2 * c2 + l1 * c2 * cos2);
    let m22 = i2 + m2 * c2 * c2;
    [[m11, m12], [m12, m22]]
}

/// Joint torques produced by the muscles at the given state.
pub fn muscle_torques(cfg: &LimbConfig, q: &[f64; 2], qd: &[f64; 2], activations: &[f64]) -> Result<[f64; 2]> {
    let mut tau = [0.0; 2];
    for (m, &z) in cfg.muscles.iter().zip(activations) {
        let l = m.fiber_length_at(q);
        if l <= 0.0 {
            return Err(Error::Domain(format!("muscle {} collapsed to length {l}", m.name)));
        }
        let f = flv_force(l, m.fiber_velocity_at(qd), z, m)?;
        for (t, r) in tau.iter_mut().zip(&m.moment_arms) {
            *t += r * f;
        }
    }
    Ok(tau)
}

/// Joint accelerations under the given joint torques.
pub fn joint_accelerations(cfg: &LimbConfig, q: &[f64; 2], qd: &[f64; 2], tau: &[f64; 2]) -> [f64; 2] {
    let [l1, _] = cfg.link_lengths;
    let [m1, m2] = cfg.link_masses;
    let c1 = 0.5 * l1;
    let c2 = 0.5 * cfg.link_lengths[1];
    let g = cfg.gravity;
    let h = m2 * l1 * c2 * q[1].sin();
    let coriolis = [-h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]), h * qd[0] * qd[0]];
    let sab = (q[0] + q[1]).sin();
    let grav = [
        g * ((m1 * c1 + m2 * l1) * q[0].sin() + m2 * c2 * sab),
        g * m2 * c2 * sab,
    ];
    let rhs = [
        tau[0] - coriolis[0] - grav[0] - cfg.joint_damping * qd[0],
        tau[1] - coriolis[1] - grav[1] - cfg.joint_damping * qd[1],
    ];
    let m = mass_matrix(cfg, q);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det,
        (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: LimbState,
    pub task_reward: f64,
    pub absorbing: bool,
}

/// Whether a state violates the joint limits or the tip height threshold.
pub fn is_absorbing(cfg: &LimbConfig, state: &LimbState) -> bool {
    state.q.iter().any(|q| q.abs() > cfg.joint_limit) || state.tip_position(cfg)[1] < cfg.min_tip_height
}

pub fn task_reward(cfg: &LimbConfig, state: &LimbState) -> f64 {
    let dv = state.tip_velocity(cfg)[0] - cfg.target_velocity;
    (-dv * dv).exp()
}

/// Advances the limb by one control step of `cfg.dt`.
pub fn env_step(cfg: &LimbConfig, state: &LimbState, action: &[f64]) -> Result<StepResult> {
    if action.len() != cfg.num_muscles() {
        return Err(Error::Shape(format!(
            "action has {} entries, limb has {} muscles",
            action.len(),
            cfg.num_muscles()
        )));
    }
    if action.iter().any(|a| a.is_nan()) {
        return Err(Error::Domain("action contains NaN".into()));
    }
    let control: Vec<f64> = action.iter().map(|a| a.clamp(0.0, 1.0)).collect();
    let h = cfg.dt / cfg.physics_substeps as f64;
    let mut q = state.q;
    let mut qd = state.qd;
    let mut z = state.activations();
    let fault = |reason: String, q: [f64; 2], qd: [f64; 2], z: &[f64]| Error::SimulationFault {
        reason,
        dump: format!("before: {}\nat fault: q={q:?} qd={qd:?} activations={z:?}", state.dump()),
    };
    for _ in 0..cfg.physics_substeps {
        for ((zi, &a), m) in z.iter_mut().zip(&control).zip(&cfg.muscles) {
            *zi = activation_step(*zi, a, h, m)?;
        }
        let tau = muscle_torques(cfg, &q, &qd, &z).map_err(|e| fault(e.to_string(), q, qd, &z))?;
        let acc = joint_accelerations(cfg, &q, &qd, &tau);
        for j in 0..NUM_JOINTS {
            qd[j] += h * acc[j];
            q[j] += h * qd[j];
        }
        if !(q.iter().chain(&qd).all(|v| v.is_finite())) {
            return Err(fault("non-finite joint state".into(), q, qd, &z));
        }
    }
    let muscles = cfg
        .muscles
        .iter()
        .zip(&z)
        .map(|(m, &activation)| MuscleState {
            activation,
            fiber_length: m.fiber_length_at(&q),
            fiber_velocity: m.fiber_velocity_at(&qd),
        })
        .collect();
    let next = LimbState { q, qd, muscles, t: state.t + cfg.dt };
    let task_reward = task_reward(cfg, &next);
    let absorbing = is_absorbing(cfg, &next);
    Ok(StepResult { state: next, task_reward, absorbing })
}

/// Episodic wrapper around [`env_step`] that tracks the step count.
#[derive(Debug, Clone)]
pub struct LimbEnv {
    pub config: LimbConfig,
    state: LimbState,
    steps: usize,
}

/// Outcome of one [`LimbEnv::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub task_reward: f64,
    pub absorbing: bool,
    /// Episode hit the step cap without absorbing.
    pub truncated: bool,
}

impl LimbEnv {
    pub fn new(config: LimbConfig) -> Result<Self> {
        config.validate()?;
        let state = LimbState::at_rest(&config, config.initial_angles);
        Ok(Self { config, state, steps: 0 })
    }

    pub fn state(&self) -> &LimbState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn num_muscles(&self) -> usize {
        self.config.num_muscles()
    }

    pub fn observation(&self) -> Vec<f64> {
        self.state.observation(&self.config)
    }

    /// Starts a new episode near the configured initial posture.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let w = self.config.initial_noise;
        let mut q = self.config.initial_angles;
        if w > 0.0 {
            for qj in &mut q {
                *qj += rng.random_range(-w..=w);
            }
        }
        self.state = LimbState::at_rest(&self.config, q);
        self.steps = 0;
        self.observation()
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Transition> {
        let out = env_step(&self.config, &self.state, action)?;
        self.state = out.state;
        self.steps += 1;
        Ok(Transition {
            observation: self.state.observation(&self.config),
            task_reward: out.task_reward,
            absorbing: out.absorbing,
            truncated: !out.absorbing && self.steps >= self.config.max_episode_steps,
        })
    }
}
