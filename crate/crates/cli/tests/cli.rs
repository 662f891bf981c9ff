use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use myogail::mtu_sim::ExpertTrajectory;
use myogail_cli::{aggregate, read_metrics, seed_dir, CliError, Preset, RunConfig, RunManifest, EXIT_CONFIG};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_myogail"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"
seeds = [1, 2]
[policy]
hidden = [16]
[expert.dataset]
episodes = 1
steps_per_episode = 600
[train]
steps_per_iter = 256
total_steps = 1024
disc_hidden = [16]
critic_hidden = [16]
"#;

fn small_run(dir: &Path, extra: &str) -> (PathBuf, RunManifest) {
    let cfg = RunConfig::from_toml(&format!("{SMALL}{extra}")).unwrap();
    let out = dir.join("run");
    let m = myogail_cli::train(&cfg, &out).unwrap();
    (out, m)
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cases = [
        ("unknown.toml", "[policy]\nfamily = \"gaussian\"\nwidth = 3\n"),
        ("fkl_beta.toml", "[policy]\nfamily = \"beta_mean_std\"\n[objective]\nmode = \"flipped_kl\"\n"),
        ("sar.toml", "[synergy]\nmode = \"sar\"\n"),
        ("latent.toml", "[synergy]\nmode = \"latent\"\n"),
        ("seeds.toml", "seeds = [3, 3]\n"),
    ];
    for (name, text) in cases {
        let cfg = write(dir.path(), name, text);
        let o = bin().args(["train", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
        assert_eq!(o.status.code(), Some(EXIT_CONFIG), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{name} wrote output before failing");
    }
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(EXIT_CONFIG));
    assert_eq!(run(&["train"]).status.code(), Some(EXIT_CONFIG), "missing --out");
    let missing = dir.path().join("nope.toml");
    assert_eq!(bin().args(["train", "--config"]).arg(&missing).args(["--out", "x"]).output().unwrap().status.code(), Some(EXIT_CONFIG));
}

#[test]
fn library_errors_map_to_exit_codes() {
    assert_eq!(CliError::Config("x".into()).exit_code(), 2);
    assert_eq!(CliError::Runtime("x".into()).exit_code(), 3);
    let e: CliError = myogail::Error::Config("bad".into()).into();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn example_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["default.toml", "gail_smoke.toml", "fig4.toml", "sar.toml"] {
        let cfg = RunConfig::load(&root.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(cfg.synergy.file.as_ref().is_none_or(|p| p.is_absolute()));
    }
    let d = RunConfig::load(&root.join("default.toml")).unwrap();
    assert_eq!(d, RunConfig::default(), "default.toml documents the defaults");
}

#[test]
fn config_hash_ignores_seeds_and_output() {
    let a = RunConfig::from_toml(SMALL).unwrap();
    let mut b = a.clone();
    b.seeds = vec![9];
    b.out = Some("elsewhere".into());
    assert_eq!(a.hash(), b.hash());
    b.train.gamma = 0.98;
    assert_ne!(a.hash(), b.hash());
    assert_eq!(RunConfig::from_toml(&a.to_toml()).unwrap(), a);
}

#[test]
fn train_writes_per_seed_artifacts_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let (out, m) = small_run(dir.path(), "");
    assert_eq!(m.seeds.len(), 2);
    for s in &m.seeds {
        assert_eq!(s.status, "ok");
        assert_eq!(s.iterations, 4);
        let d = seed_dir(&out, s.seed);
        for f in ["config.toml", "metrics.csv", "checkpoint.json", "seed.json"] {
            assert!(d.join(f).exists(), "{f}");
        }
        assert_eq!(read_metrics(&d.join("metrics.csv")).unwrap().len(), 4);
    }
    assert!(out.join("manifest.json").exists());
    let agg = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 5);
    assert!(agg.starts_with("iteration,env_steps,"));
}

#[test]
fn aggregate_of_one_seed_is_the_seed_itself() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = small_run(dir.path(), "");
    let d = seed_dir(&out, 1);
    let rows = read_metrics(&d.join("metrics.csv")).unwrap();
    let a = aggregate(&[d]).unwrap();
    let header: Vec<&str> = myogail::learn::METRICS_COLUMNS.to_vec();
    for (c, name) in a.columns.iter().enumerate() {
        let k = header.iter().position(|h| h == name).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let s = a.stats[c][i];
            assert_eq!((s.mean, s.q25, s.q75), (row[k], row[k], row[k]), "{name} at {i}");
        }
    }
}

#[test]
fn aggregate_rejects_mixed_configs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, _) = small_run(&dir.path().join("a"), "");
    let (b, _) = small_run(&dir.path().join("b"), "[objective]\nmode = \"none\"\n");
    let err = aggregate(&[seed_dir(&a, 1), seed_dir(&b, 1)]).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_CONFIG);
    let o = bin().arg("aggregate").arg(seed_dir(&a, 1)).arg(seed_dir(&b, 2)).arg("--out").arg(dir.path().join("x.csv")).output().unwrap();
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    let o = bin().arg("aggregate").arg(seed_dir(&a, 1)).arg(seed_dir(&a, 2)).arg("--out").arg(dir.path().join("ok.csv")).output().unwrap();
    assert!(o.status.success());
}

#[test]
fn eval_is_deterministic_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = small_run(dir.path(), "");
    let d = seed_dir(&out, 2);
    let a = myogail_cli::eval(&d, 2, 5, &dir.path().join("e1")).unwrap();
    let b = myogail_cli::eval(&d, 2, 5, &dir.path().join("e2")).unwrap();
    assert_eq!(a, b);
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("e1/eval.json"), read("e2/eval.json"));
    assert_eq!(read("e1/joints.csv"), read("e2/joints.csv"));
    let joints = String::from_utf8(read("e1/joints.csv")).unwrap();
    assert!(joints.starts_with("step,policy_hip,policy_knee,expert_hip,expert_knee"));
    assert!(a.expert.mean_episode_length > a.random.mean_episode_length);
    let o = bin().arg("eval").arg(&d).args(["--episodes", "1"]).output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("deterministic"));
}

#[test]
fn synergy_from_play_data_reports_cumulative_variance() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut text = String::new();
    for _ in 0..400 {
        let row: Vec<String> = (0..12).map(|_| format!("{}", rng.random_range(0.0..1.0))).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let play = write(dir.path(), "play.csv", &text);
    let out = dir.path().join("syn");
    let o = bin().arg("synergy").arg("--play-data").arg(&play).args(["--n-syn", "12", "--out"]).arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(out.join("variance.csv")).unwrap();
    let rows: Vec<Vec<f64>> = report.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 12);
    assert!((rows[11][2] - 1.0).abs() < 1e-5);
    assert!(rows.windows(2).all(|w| w[0][1] >= w[1][1]), "components sorted by variance");
    assert!(out.join("synergy.json").exists());

    let o = bin().arg("synergy").arg("--play-data").arg(&play).args(["--n-syn", "13", "--out"]).arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn synergy_space_training_uses_a_fitted_map() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml(&format!("{SMALL}[synergy]\nplay_steps = 512\n")).unwrap();
    let map_dir = dir.path().join("syn");
    let map = myogail_cli::synergy(&cfg, None, &map_dir).unwrap();
    assert_eq!(map.n_syn(), 4);
    assert!(map_dir.join("play.csv").exists());
    let sar = format!("{SMALL}[synergy]\nmode = \"sar\"\nfile = \"{}\"\n", map_dir.join("synergy.json").display());
    let cfg = RunConfig::from_toml(&sar).unwrap();
    let m = myogail_cli::train(&cfg, &dir.path().join("run")).unwrap();
    assert!(m.seeds.iter().all(|s| s.status == "ok" && s.synergy_sha256.is_some()));
}

#[test]
fn fig4_preset_summarizes_entropy_and_action_mean() {
    assert_eq!(Preset::Fig4.columns(), ["entropy", "action_mean_abs"]);
    let base = RunConfig::from_toml(SMALL).unwrap();
    let names: Vec<String> = Preset::Fig4.variants(&base).unwrap().into_iter().map(|v| v.0).collect();
    assert_eq!(names.len(), 6);
    let dist = Preset::Dist.variants(&base).unwrap();
    assert_eq!(dist.len(), 5);

    let dir = tempfile::tempdir().unwrap();
    let mut small = base.clone();
    small.seeds = vec![1];
    small.train.total_steps = 512;
    let out = dir.path().join("fig4");
    myogail_cli::train_preset(&small, Preset::Fig4, &out).unwrap();
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let header: Vec<&str> = summary.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 6 * 2 * 3);
    assert!(header.contains(&"flipped_kl.action_mean_abs.q75"));
    assert!(header.contains(&"entropy.entropy.mean"));
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn gen_expert_round_trips_state_only_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "e.toml", "[expert.dataset]\nepisodes = 2\nsteps_per_episode = 400\n");
    let out = dir.path().join("data/expert.csv");
    let o = bin().args(["gen-expert", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = ExpertTrajectory::load(&out).unwrap();
    assert_eq!(t.episodes.len(), 2);
    assert!(t.columns.iter().all(|c| !c.contains("control") && !c.contains("action")), "{:?}", t.columns);
    let rc = RunConfig::load(&cfg).unwrap();
    assert_eq!(myogail_cli::load_expert(&rc).unwrap(), t);

    let with_file = write(dir.path(), "f.toml", "[expert]\nfile = \"data/expert.csv\"\n");
    let rc = RunConfig::load(&with_file).unwrap();
    assert_eq!(myogail_cli::load_expert(&rc).unwrap(), t);
}
