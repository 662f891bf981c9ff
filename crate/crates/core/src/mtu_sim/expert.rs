//! Open-loop scripted expert and the state-only demonstration dataset.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::limb::{LimbConfig, LimbEnv, OBSERVATION_NAMES};
use crate::error::{Error, Result};

/// Periodic pulse pattern. Every muscle fires one raised-cosine burst per
/// period, centred at its phase offset and lasting `duty` of the period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertConfig {
    /// Period of the gait cycle (s).
    pub period: f64,
    /// Burst centre of each muscle as a fraction of the period.
    pub phases: Vec<f64>,
    /// Fraction of the period each muscle is active, in (0, 1].
    pub duty_cycles: Vec<f64>,
    /// Peak control of each burst.
    pub amplitudes: Vec<f64>,
    /// Tonic control added underneath the bursts.
    #[serde(default)]
    pub baselines: Vec<f64>,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        // (phase, duty, amplitude, tonic baseline) for hip flexors, hip
        // extensors, knee extensors, knee flexors.
        let groups = [(0.0, 0.5, 0.8, 0.37), (0.5, 0.5, 0.12, 0.0), (0.5, 0.5, 0.43, 0.21), (0.0, 0.5, 0.16, 0.0)];
        let mut cfg = Self {
            period: 1.0,
            phases: vec![],
            duty_cycles: vec![],
            amplitudes: vec![],
            baselines: vec![],
        };
        for (phase, duty, amp, base) in groups {
            for _ in 0..3 {
                cfg.phases.push(phase);
                cfg.duty_cycles.push(duty);
                cfg.amplitudes.push(amp);
                cfg.baselines.push(base);
            }
        }
        cfg
    }
}

impl ExpertConfig {
    pub fn num_muscles(&self) -> usize {
        self.phases.len()
    }

    pub fn validate(&self, num_muscles: usize) -> Result<()> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::Config(format!("expert period must be > 0, got {}", self.period)));
        }
        let n = self.phases.len();
        if n != num_muscles || self.duty_cycles.len() != n || self.amplitudes.len() != n {
            return Err(Error::Config(format!(
                "expert pattern must list phases, duty_cycles and amplitudes for all {num_muscles} muscles"
            )));
        }
        if !self.baselines.is_empty() && self.baselines.len() != n {
            return Err(Error::Config("expert baselines must be empty or one per muscle".into()));
        }
        if self.duty_cycles.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return Err(Error::Config("expert duty cycles must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Raised-cosine burst of width `duty` centred at phase zero; `x` is a phase in [0, 1).
fn burst(x: f64, duty: f64) -> f64 {
    let centred = if x > 0.5 { x - 1.0 } else { x };
    if centred.abs() >= 0.5 * duty {
        0.0
    } else {
        let c = (std::f64::consts::PI * centred / duty).cos();
        c * c
    }
}

/// Control vector of the scripted expert at time `t`.
pub fn scripted_expert(t: f64, cfg: &ExpertConfig) -> Vec<f64> {
    let cycle = t / cfg.period;
    (0..cfg.num_muscles())
        .map(|i| {
            let x = (cycle - cfg.phases[i]).rem_euclid(1.0);
            let base = cfg.baselines.get(i).copied().unwrap_or(0.0);
            (base + cfg.amplitudes[i] * burst(x, cfg.duty_cycles[i])).clamp(0.0, 1.0)
        })
        .collect()
}

/// State-only demonstrations: observation rows grouped into episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertTrajectory {
    pub dt: f64,
    pub columns: Vec<String>,
    pub episodes: Vec<Vec<Vec<f64>>>,
}

impl ExpertTrajectory {
    pub fn obs_dim(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.episodes.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All observations flattened across episodes.
    pub fn observations(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.episodes.iter().flatten()
    }

    /// Serializes as text: a `# dt=` metadata line, a header row, one
    /// comma-separated row per step and a blank line between episodes.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# dt={}", self.dt).unwrap();
        writeln!(out, "{}", self.columns.join(",")).unwrap();
        for (k, ep) in self.episodes.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            for row in ep {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(out, "{}", cells.join(",")).unwrap();
            }
        }
        out
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut dt = None;
        let mut columns: Option<Vec<String>> = None;
        let mut episodes = vec![];
        let mut current: Vec<Vec<f64>> = vec![];
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if let Some(meta) = trimmed.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    if let Some(v) = kv.strip_prefix("dt=") {
                        dt = Some(v.parse::<f64>().map_err(|e| Error::Parse(format!("bad dt '{v}': {e}")))?);
                    }
                }
                continue;
            }
            if trimmed.is_empty() {
                if !current.is_empty() {
                    episodes.push(std::mem::take(&mut current));
                }
                continue;
            }
            match &columns {
                None => columns = Some(trimmed.split(',').map(|s| s.trim().to_string()).collect()),
                Some(cols) => {
                    let row = trimmed
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
                    if row.len() != cols.len() {
                        return Err(Error::Parse(format!(
                            "line {}: expected {} values, found {}",
                            lineno + 1,
                            cols.len(),
                            row.len()
                        )));
                    }
                    current.push(row);
                }
            }
        }
        if !current.is_empty() {
            episodes.push(current);
        }
        let dt = dt.ok_or_else(|| Error::Parse("missing '# dt=' metadata line".into()))?;
        let columns = columns.ok_or_else(|| Error::Parse("missing header row".into()))?;
        Ok(Self { dt, columns, episodes })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_text().as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(f))
    }
}

/// Settings for recording expert demonstrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertDatasetConfig {
    pub episodes: usize,
    /// Recorded steps per episode after the transient.
    pub steps_per_episode: usize,
    /// Steps discarded at the start of every episode.
    pub transient_steps: usize,
}

impl Default for ExpertDatasetConfig {
    fn default() -> Self {
        Self { episodes: 4, steps_per_episode: 2000, transient_steps: 300 }
    }
}

/// One expert rollout: observations (including the transient) and the
/// executed controls, one entry per control step.
#[derive(Debug, Clone)]
pub struct ExpertRollout {
    pub observations: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub task_rewards: Vec<f64>,
}

/// Runs the scripted expert for `steps` control steps from a reset state.
/// The step cap of the environment is ignored; absorbing states are errors.
pub fn rollout_expert<R: Rng + ?Sized>(
    env_cfg: &LimbConfig,
    expert: &ExpertConfig,
    steps: usize,
    rng: &mut R,
) -> Result<ExpertRollout> {
    expert.validate(env_cfg.num_muscles())?;
    let mut env = LimbEnv::new(env_cfg.clone())?;
    let mut obs = env.reset(rng);
    let mut out = ExpertRollout { observations: vec![], controls: vec![], task_rewards: vec![] };
    for k in 0..steps {
        let t = k as f64 * env_cfg.dt;
        let u = scripted_expert(t, expert);
        out.observations.push(obs);
        let tr = env.step(&u)?;
        if tr.absorbing {
            return Err(Error::Config(format!(
                "scripted expert reached an absorbing state at step {k} (t={t:.3} s): {:?}",
                env.state()
            )));
        }
        out.controls.push(u);
        out.task_rewards.push(tr.task_reward);
        obs = tr.observation;
    }
    Ok(out)
}

/// Records the state-only demonstration dataset, dropping each episode's transient.
pub fn generate_expert_dataset<R: Rng + ?Sized>(
    env_cfg: &LimbConfig,
    expert: &ExpertConfig,
    data: &ExpertDatasetConfig,
    rng: &mut R,
) -> Result<ExpertTrajectory> {
    if data.episodes == 0 || data.steps_per_episode == 0 {
        return Err(Error::Config("expert dataset needs at least one episode and one step".into()));
    }
    let mut episodes = Vec::with_capacity(data.episodes);
    for _ in 0..data.episodes {
        let r = rollout_expert(env_cfg, expert, data.transient_steps + data.steps_per_episode, rng)?;
        episodes.push(r.observations[data.transient_steps..].to_vec());
    }
    Ok(ExpertTrajectory {
        dt: env_cfg.dt,
        columns: OBSERVATION_NAMES.iter().map(|s| s.to_string()).collect(),
        episodes,
    })
}
