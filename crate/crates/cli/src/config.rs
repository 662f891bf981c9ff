//! Run configuration: a strict TOML schema covering environment, expert,
//! policy, objective, synergy and training settings.

use std::path::{Path, PathBuf};

use myogail::explore_obj::{ObjectiveConfig, ObjectiveMode};
use myogail::learn::{PolicyConfig, TrainConfig};
use myogail::mtu_sim::{ExpertConfig, ExpertDatasetConfig, LimbConfig};
use myogail::policy_dist::PolicyFamily;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynergyMode {
    /// Policy acts on all muscles.
    #[default]
    Off,
    /// Policy acts in the synergy space of a fitted map.
    Sar,
    /// Latent-noise exploration; requires the latent Gaussian family.
    Latent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynergySettings {
    pub mode: SynergyMode,
    /// Fitted map used when `mode = "sar"`, relative to the config file.
    pub file: Option<PathBuf>,
    pub n_syn: usize,
    /// Play-phase budget when the `synergy` command fits a map from scratch.
    pub play_steps: usize,
    pub ica_seed: u64,
}

impl Default for SynergySettings {
    fn default() -> Self {
        Self { mode: SynergyMode::Off, file: None, n_syn: 4, play_steps: 50_000, ica_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertSettings {
    /// Demonstration file; generated in memory from `[expert]` when absent.
    pub file: Option<PathBuf>,
    /// Seed of the in-memory demonstration rollouts.
    pub seed: u64,
    pub dataset: ExpertDatasetConfig,
    pub pattern: ExpertConfig,
}

impl Default for ExpertSettings {
    fn default() -> Self {
        Self { file: None, seed: 0, dataset: ExpertDatasetConfig::default(), pattern: ExpertConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub env: LimbConfig,
    pub expert: ExpertSettings,
    pub policy: PolicyConfig,
    pub objective: ObjectiveConfig,
    pub synergy: SynergySettings,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3, 4, 5],
            out: None,
            env: LimbConfig::default(),
            expert: ExpertSettings::default(),
            policy: PolicyConfig::default(),
            objective: ObjectiveConfig::default(),
            synergy: SynergySettings::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config and resolves relative file paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.expert.file, &mut cfg.synergy.file, &mut cfg.out].into_iter().flatten() {
            let joined = if p.is_relative() { base.join(&*p) } else { p.clone() };
            *p = std::path::absolute(&joined).map_err(|e| CliError::Config(format!("{}: {e}", joined.display())))?;
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg_err = |e: myogail::Error| CliError::Config(e.to_string());
        self.env.validate().map_err(cfg_err)?;
        self.policy.validate().map_err(cfg_err)?;
        self.train.validate().map_err(cfg_err)?;
        self.objective.validate_for(self.policy.family).map_err(cfg_err)?;
        self.expert.pattern.validate(self.env.num_muscles()).map_err(cfg_err)?;
        if self.seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::Config("seed list contains duplicates".into()));
        }
        match self.synergy.mode {
            SynergyMode::Latent if self.policy.family != PolicyFamily::LatentGaussian => {
                return Err(CliError::Config("synergy mode 'latent' needs policy family 'latent_gaussian'".into()));
            }
            SynergyMode::Sar if self.synergy.file.is_none() => {
                return Err(CliError::Config("synergy mode 'sar' needs a fitted map (synergy.file)".into()));
            }
            _ => {}
        }
        if self.synergy.n_syn == 0 || self.synergy.n_syn > self.env.num_muscles() {
            return Err(CliError::Config(format!("n_syn must lie in 1..={}", self.env.num_muscles())));
        }
        Ok(())
    }

    /// SHA-256 of the resolved config with seed list and output directory
    /// removed, so that all seeds of one setup share the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.seeds = vec![];
        c.out = None;
        c.train.seed = 0;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }
}

/// Ablation presets: named variants of a base config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Policy distribution families.
    Dist,
    /// The six exploration objectives, reward columns.
    Objective,
    /// Plain muscles, synergy space and latent exploration.
    Synergy,
    /// The six exploration objectives, entropy and action-mean columns.
    Fig4,
}

pub const OBJECTIVE_MODES: [ObjectiveMode; 6] = [
    ObjectiveMode::Entropy,
    ObjectiveMode::None,
    ObjectiveMode::TargetEntropy,
    ObjectiveMode::FlippedKl,
    ObjectiveMode::FlippedKlTargetEntropy,
    ObjectiveMode::OobPenaltyEntropy,
];

impl Preset {
    /// Metric columns the preset's summary CSV reports for every variant.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Preset::Fig4 => &["entropy", "action_mean_abs"],
            _ => &["task_reward", "episode_length", "gail_reward"],
        }
    }

    pub fn variants(self, base: &RunConfig) -> Result<Vec<(String, RunConfig)>, CliError> {
        let mut out = vec![];
        match self {
            Preset::Dist => {
                for family in PolicyFamily::ALL {
                    let mut c = base.clone();
                    c.policy.family = family;
                    c.synergy.mode = SynergyMode::Off;
                    if c.objective.mode.uses_flipped_kl() && !matches!(family, PolicyFamily::Gaussian | PolicyFamily::LatentGaussian) {
                        c.objective.mode = ObjectiveMode::Entropy;
                    }
                    out.push((family.name().to_string(), c));
                }
            }
            Preset::Objective | Preset::Fig4 => {
                for mode in OBJECTIVE_MODES {
                    let mut c = base.clone();
                    c.policy.family = PolicyFamily::Gaussian;
                    c.synergy.mode = SynergyMode::Off;
                    c.objective.mode = mode;
                    out.push((mode.name().to_string(), c));
                }
            }
            Preset::Synergy => {
                let mut plain = base.clone();
                plain.synergy.mode = SynergyMode::Off;
                plain.policy.family = PolicyFamily::Gaussian;
                out.push(("muscles".to_string(), plain));
                let mut sar = base.clone();
                sar.synergy.mode = SynergyMode::Sar;
                sar.policy.family = PolicyFamily::Gaussian;
                out.push(("sar".to_string(), sar));
                let mut latent = base.clone();
                latent.synergy.mode = SynergyMode::Latent;
                latent.policy.family = PolicyFamily::LatentGaussian;
                out.push(("latent".to_string(), latent));
            }
        }
        for (name, c) in &out {
            c.validate().map_err(|e| CliError::Config(format!("preset variant '{name}': {e}")))?;
        }
        Ok(out)
    }
}
