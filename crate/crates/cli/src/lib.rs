//! Batch harness: expert generation, synergy fitting, multi-seed training with
//! ablation presets, evaluation and cross-seed aggregation.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use myogail::learn::{evaluate, metrics_csv, train_gail, ActionSpace, Checkpoint, Controller, EvalSummary, METRICS_COLUMNS};
use myogail::mtu_sim::{generate_expert_dataset, scripted_expert, ExpertTrajectory};
use myogail::synergy::{action_matrix, fit_synergies, play_phase, ActionMatrix, IcaOptions, SynergyMap};
use myogail::explore_obj::{ObjectiveConfig, ObjectiveMode};
use myogail::learn::PolicyConfig;
use myogail::policy_dist::PolicyFamily;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::statistics::{Data, OrderStatistics};

pub use config::{Preset, RunConfig, SynergyMode, SynergySettings};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime fault: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<myogail::Error> for CliError {
    fn from(e: myogail::Error) -> Self {
        match e {
            myogail::Error::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

/// Demonstrations named by the config, or recorded in memory from the scripted expert.
pub fn load_expert(cfg: &RunConfig) -> Result<ExpertTrajectory> {
    match &cfg.expert.file {
        Some(p) => ExpertTrajectory::load(p).map_err(|e| CliError::Config(format!("expert file {}: {e}", p.display()))),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.expert.seed);
            Ok(generate_expert_dataset(&cfg.env, &cfg.expert.pattern, &cfg.expert.dataset, &mut rng)?)
        }
    }
}

pub fn load_synergy(cfg: &RunConfig) -> Result<Option<Arc<SynergyMap>>> {
    if cfg.synergy.mode != SynergyMode::Sar {
        return Ok(None);
    }
    let p = cfg.synergy.file.as_ref().ok_or_else(|| CliError::Config("synergy mode 'sar' needs synergy.file".into()))?;
    let map = SynergyMap::load(p).map_err(|e| CliError::Config(format!("synergy file {}: {e}", p.display())))?;
    Ok(Some(Arc::new(map)))
}

pub fn gen_expert(cfg: &RunConfig, out: &Path) -> Result<ExpertTrajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.expert.seed);
    let traj = generate_expert_dataset(&cfg.env, &cfg.expert.pattern, &cfg.expert.dataset, &mut rng)?;
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    traj.save(out)?;
    Ok(traj)
}

/// Per-seed manifest written next to the metrics and checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedManifest {
    pub seed: u64,
    pub config_hash: String,
    pub expert_sha256: String,
    pub synergy_sha256: Option<String>,
    pub status: String,
    pub error: Option<String>,
    pub iterations: usize,
    pub env_steps: usize,
    /// Wall-clock training time of this seed.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seeds: Vec<SeedManifest>,
}

pub fn seed_dir(run_dir: &Path, seed: u64) -> PathBuf {
    run_dir.join(format!("seed_{seed}"))
}

fn run_seed(cfg: &RunConfig, seed: u64, dir: &Path, expert: &ExpertTrajectory, synergy: Option<Arc<SynergyMap>>, hashes: (&str, &str, Option<&str>)) -> SeedManifest {
    let (config_hash, expert_sha, syn_sha) = hashes;
    let mut c = cfg.clone();
    c.seeds = vec![seed];
    c.train.seed = seed;
    c.out = None;
    let mut m = SeedManifest {
        seed,
        config_hash: config_hash.to_string(),
        expert_sha256: expert_sha.to_string(),
        synergy_sha256: syn_sha.map(str::to_string),
        status: "running".into(),
        error: None,
        iterations: 0,
        env_steps: 0,
        wall_seconds: 0.0,
    };
    let start = std::time::Instant::now();
    let res = (|| -> Result<()> {
        write_file(&dir.join("config.toml"), &c.to_toml())?;
        let out = train_gail(&c.env, expert, &c.policy, &c.objective, synergy, &c.train, config_hash)?;
        write_file(&dir.join("metrics.csv"), &metrics_csv(&out.metrics))?;
        write_file(&dir.join("checkpoint.json"), &out.checkpoint.to_json()?)?;
        m.iterations = out.metrics.len();
        m.env_steps = out.checkpoint.env_steps;
        Ok(())
    })();
    m.wall_seconds = start.elapsed().as_secs_f64();
    match res {
        Ok(()) => m.status = "ok".into(),
        Err(e) => {
            log::error!("seed {seed} failed: {e}");
            m.status = "failed".into();
            m.error = Some(e.to_string());
        }
    }
    if let Err(e) = write_file(&dir.join("seed.json"), &serde_json::to_string_pretty(&m).unwrap()) {
        log::error!("seed {seed}: could not write manifest: {e}");
    }
    m
}

fn worker_count(jobs: usize) -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(jobs).max(1)
}

/// Trains every seed of `cfg` into `out/seed_<s>` on parallel workers, then
/// writes the run manifest and the cross-seed aggregate. A failing seed is
/// recorded and does not stop the others.
pub fn train(cfg: &RunConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let expert = load_expert(cfg)?;
    let synergy = load_synergy(cfg)?;
    let expert_sha = sha256_hex(expert.to_text().as_bytes());
    let syn_sha = match &cfg.synergy.file {
        Some(p) if synergy.is_some() => Some(sha256_hex(&std::fs::read(p)?)),
        _ => None,
    };
    let hash = cfg.hash();
    std::fs::create_dir_all(out)?;
    write_file(&out.join("config.toml"), &cfg.to_toml())?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<SeedManifest>> = Mutex::new(vec![]);
    std::thread::scope(|s| {
        for _ in 0..worker_count(cfg.seeds.len()) {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = cfg.seeds.get(k) else { break };
                log::info!("seed {seed}: training");
                let m = run_seed(cfg, seed, &seed_dir(out, seed), &expert, synergy.clone(), (&hash, &expert_sha, syn_sha.as_deref()));
                results.lock().unwrap().push(m);
            });
        }
    });
    let mut seeds = results.into_inner().unwrap();
    seeds.sort_by_key(|m| cfg.seeds.iter().position(|&s| s == m.seed));
    let manifest = RunManifest { config_hash: hash, seeds };
    write_file(&out.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    let ok: Vec<PathBuf> = manifest.seeds.iter().filter(|m| m.status == "ok").map(|m| seed_dir(out, m.seed)).collect();
    if ok.is_empty() {
        return Err(CliError::Runtime("every seed failed; see manifest.json".into()));
    }
    let agg = aggregate(&ok)?;
    write_file(&out.join("aggregate.csv"), &agg.to_csv())?;
    Ok(manifest)
}

/// Runs every variant of a preset under `out/<variant>` and writes the
/// plot-ready `summary.csv`.
pub fn train_preset(base: &RunConfig, preset: Preset, out: &Path) -> Result<Vec<(String, RunManifest)>> {
    let variants = preset.variants(base)?;
    let mut manifests = vec![];
    let mut aggs = vec![];
    for (name, cfg) in &variants {
        log::info!("preset variant {name}");
        let dir = out.join(sanitize(name));
        let m = train(cfg, &dir)?;
        let ok: Vec<PathBuf> = m.seeds.iter().filter(|s| s.status == "ok").map(|s| seed_dir(&dir, s.seed)).collect();
        aggs.push((name.clone(), aggregate(&ok)?));
        manifests.push((name.clone(), m));
    }
    write_file(&out.join("summary.csv"), &preset_summary(preset, &aggs))?;
    Ok(manifests)
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

/// One column per curve: `<variant>.<metric>.<mean|q25|q75>` against env steps.
pub fn preset_summary(preset: Preset, aggs: &[(String, Aggregate)]) -> String {
    let rows = aggs.iter().map(|(_, a)| a.env_steps.len()).min().unwrap_or(0);
    let mut header = vec!["env_steps".to_string()];
    for (name, _) in aggs {
        for col in preset.columns() {
            for stat in ["mean", "q25", "q75"] {
                header.push(format!("{name}.{col}.{stat}"));
            }
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..rows {
        let mut cells = vec![format!("{}", aggs[0].1.env_steps[i])];
        for (_, a) in aggs {
            for col in preset.columns() {
                let s = &a.stats[a.column_index(col).expect("metric column")][i];
                cells.extend([s.mean, s.q25, s.q75].iter().map(|v| format!("{v}")));
            }
        }
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Per-iteration mean and interquartile range of every metric across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub columns: Vec<String>,
    pub env_steps: Vec<f64>,
    /// `stats[column][iteration]`
    pub stats: Vec<Vec<Stat>>,
}

impl Aggregate {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> String {
        let mut header = vec!["iteration".to_string(), "env_steps".to_string()];
        for c in &self.columns {
            header.extend([format!("{c}_mean"), format!("{c}_q25"), format!("{c}_q75")]);
        }
        let mut out = header.join(",");
        out.push('\n');
        for i in 0..self.env_steps.len() {
            let mut cells = vec![i.to_string(), format!("{}", self.env_steps[i])];
            for s in &self.stats {
                cells.extend([s[i].mean, s[i].q25, s[i].q75].iter().map(|v| format!("{v}")));
            }
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers().map_err(|e| CliError::Runtime(e.to_string()))?.iter().map(str::to_string).collect();
    if header != METRICS_COLUMNS {
        return Err(CliError::Config(format!("{}: unexpected metrics columns", path.display())));
    }
    let mut rows = vec![];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Runtime(e.to_string()))?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?);
    }
    Ok(rows)
}

/// Aggregates seed directories, refusing to mix configs. Series are cut to
/// the shortest run.
pub fn aggregate(seed_dirs: &[PathBuf]) -> Result<Aggregate> {
    if seed_dirs.is_empty() {
        return Err(CliError::Config("nothing to aggregate".into()));
    }
    let mut hash: Option<String> = None;
    let mut seeds = vec![];
    let mut runs = vec![];
    for d in seed_dirs {
        let text = std::fs::read_to_string(d.join("seed.json")).map_err(|e| CliError::Config(format!("{}: {e}", d.display())))?;
        let m: SeedManifest = serde_json::from_str(&text)?;
        match &hash {
            Some(h) if *h != m.config_hash => {
                return Err(CliError::Config(format!("{} was trained with config {} but {h} was expected", d.display(), m.config_hash)));
            }
            None => hash = Some(m.config_hash.clone()),
            _ => {}
        }
        seeds.push(m.seed);
        runs.push(read_metrics(&d.join("metrics.csv"))?);
    }
    let n_iter = runs.iter().map(Vec::len).min().unwrap_or(0);
    let columns: Vec<String> = METRICS_COLUMNS[2..].iter().map(|s| s.to_string()).collect();
    let env_steps = (0..n_iter).map(|i| runs[0][i][1]).collect();
    let stats = (2..METRICS_COLUMNS.len())
        .map(|c| {
            (0..n_iter)
                .map(|i| {
                    let v: Vec<f64> = runs.iter().map(|r| r[i][c]).collect();
                    let mean = v.iter().sum::<f64>() / v.len() as f64;
                    let mut d = Data::new(v);
                    Stat { mean, q25: d.lower_quartile(), q75: d.upper_quartile() }
                })
                .collect()
        })
        .collect();
    Ok(Aggregate { config_hash: hash.unwrap(), seeds, columns, env_steps, stats })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub seed: u64,
    pub deterministic: EvalSummary,
    pub stochastic: EvalSummary,
    pub random: EvalSummary,
    pub expert: EvalSummary,
}

fn strip_joints(mut s: EvalSummary) -> (EvalSummary, Vec<[f64; 2]>) {
    let j = std::mem::take(&mut s.first_episode_joints);
    (s, j)
}

/// Evaluates the checkpoint of a seed directory with mean and sampled
/// actions, alongside uniform-random and scripted-expert references. Writes
/// `eval.json` and a joint-angle dump to `out`.
pub fn eval(seed_dir: &Path, episodes: usize, seed: u64, out: &Path) -> Result<EvalReport> {
    let cfg = RunConfig::load(&seed_dir.join("config.toml"))?;
    let text = std::fs::read_to_string(seed_dir.join("checkpoint.json")).map_err(|e| CliError::Config(format!("{}: {e}", seed_dir.display())))?;
    let ck = Checkpoint::from_json(&text)?;
    let policy = ck.policy()?;
    let disc = ck.discriminator()?;
    let space = match load_synergy(&cfg)? {
        Some(m) => ActionSpace::Synergies(m),
        None => ActionSpace::Muscles(cfg.env.num_muscles()),
    };
    if space.bounds().dim() != policy.action_dim() {
        return Err(CliError::Runtime(format!(
            "checkpoint acts in {} dimensions, the configured action space has {}",
            policy.action_dim(),
            space.bounds().dim()
        )));
    }
    let run = |det: bool| evaluate(&cfg.env, &Controller::Policy { policy: &policy, action_space: &space, deterministic: det }, Some(&disc), episodes, seed);
    let (det, det_j) = strip_joints(run(true)?);
    let (sto, _) = strip_joints(run(false)?);
    let (random, _) = strip_joints(evaluate(&cfg.env, &Controller::Random, Some(&disc), episodes, seed)?);
    let dt = cfg.env.dt;
    let pattern = cfg.expert.pattern.clone();
    let replay = move |k: usize| scripted_expert(k as f64 * dt, &pattern);
    let (expert, exp_j) = strip_joints(evaluate(&cfg.env, &Controller::Replay(&replay), Some(&disc), 1, seed)?);
    let report = EvalReport { episodes, seed, deterministic: det, stochastic: sto, random, expert };
    write_file(&out.join("eval.json"), &serde_json::to_string_pretty(&report)?)?;
    let mut joints = String::from("step,policy_hip,policy_knee,expert_hip,expert_knee\n");
    for k in 0..det_j.len().max(exp_j.len()) {
        let cell = |j: &Vec<[f64; 2]>, i: usize| j.get(k).map(|q| format!("{}", q[i])).unwrap_or_default();
        writeln!(joints, "{k},{},{},{},{}", cell(&det_j, 0), cell(&det_j, 1), cell(&exp_j, 0), cell(&exp_j, 1)).unwrap();
    }
    write_file(&out.join("joints.csv"), &joints)?;
    Ok(report)
}

/// Reads play-phase controls, one comma-separated row per timestep.
pub fn read_play_data(path: &Path) -> Result<ActionMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut rows = vec![];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let row: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?);
    }
    Ok(action_matrix(&rows)?)
}

pub fn write_play_data(path: &Path, m: &ActionMatrix) -> Result<()> {
    let mut out = String::new();
    for col in m.column_iter() {
        let cells: Vec<String> = col.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
    write_file(path, &out)
}

/// Fits a synergy map from recorded play data, or runs the play phase first.
/// Writes `synergy.json` and `variance.csv` to `out`.
pub fn synergy(cfg: &RunConfig, play_data: Option<&Path>, out: &Path) -> Result<SynergyMap> {
    let m = match play_data {
        Some(p) => read_play_data(p)?,
        None => {
            let expert = load_expert(cfg)?;
            let policy = PolicyConfig { family: PolicyFamily::Gaussian, ..cfg.policy.clone() };
            let objective = ObjectiveConfig { mode: ObjectiveMode::OobPenaltyEntropy, bounds: None, ..cfg.objective.clone() };
            let train = myogail::learn::TrainConfig { seed: cfg.synergy.ica_seed, ..cfg.train.clone() };
            let m = play_phase(&cfg.env, &expert, &policy, &objective, &train, cfg.synergy.play_steps)?;
            write_play_data(&out.join("play.csv"), &m)?;
            m
        }
    };
    let map = fit_synergies(&m, cfg.synergy.n_syn, &IcaOptions { seed: cfg.synergy.ica_seed, ..Default::default() })?;
    std::fs::create_dir_all(out)?;
    map.save(&out.join("synergy.json"))?;
    write_file(&out.join("variance.csv"), &map.variance_report())?;
    Ok(map)
}
