use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use myogail_cli::{CliError, Preset, RunConfig};

#[derive(Parser)]
#[command(name = "myogail", version, about = "Adversarial imitation on an over-actuated muscle-driven limb")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Record the scripted expert's state-only demonstrations.
    GenExpert {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every seed of a config, or every variant of a preset.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Single seed, overrides the config's seed list.
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Overrides the training budget in environment steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Evaluate the checkpoint in a seed directory.
    Eval {
        run: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory, the seed directory by default.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a synergy map from play data or from a fresh play phase.
    Synergy {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Recorded controls, one comma-separated row per timestep.
        #[arg(long)]
        play_data: Option<PathBuf>,
        #[arg(long)]
        n_syn: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate seed directories into per-iteration mean and IQR.
    Aggregate {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(config: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    match config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::GenExpert { config, out } => {
            let cfg = load(&config)?;
            let t = myogail_cli::gen_expert(&cfg, &out)?;
            println!("wrote {} episodes, {} states to {}", t.episodes.len(), t.len(), out.display());
        }
        Cmd::Train { config, seed, seeds, out, preset, steps } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(n) = steps {
                cfg.train.total_steps = n;
            }
            cfg.validate()?;
            let out = out.or_else(|| cfg.out.clone()).ok_or_else(|| CliError::Config("no output directory (--out or out = ...)".into()))?;
            match preset {
                Some(p) => {
                    for (name, m) in myogail_cli::train_preset(&cfg, p, &out)? {
                        let ok = m.seeds.iter().filter(|s| s.status == "ok").count();
                        println!("{name}: {ok}/{} seeds ok, config {}", m.seeds.len(), &m.config_hash[..12]);
                    }
                    println!("summary: {}", out.join("summary.csv").display());
                }
                None => {
                    let m = myogail_cli::train(&cfg, &out)?;
                    for s in &m.seeds {
                        println!("seed {}: {} ({} iterations){}", s.seed, s.status, s.iterations, s.error.as_deref().map(|e| format!(": {e}")).unwrap_or_default());
                    }
                    println!("aggregate: {}", out.join("aggregate.csv").display());
                }
            }
        }
        Cmd::Eval { run, episodes, seed, out } => {
            let out = out.unwrap_or_else(|| run.clone());
            let r = myogail_cli::eval(&run, episodes, seed, &out)?;
            println!("{:<14} {:>12} {:>12} {:>12}", "controller", "ep_length", "task_reward", "gail_reward");
            for (name, s) in [("deterministic", &r.deterministic), ("stochastic", &r.stochastic), ("random", &r.random), ("expert", &r.expert)] {
                println!("{name:<14} {:>12.1} {:>12.3} {:>12.4}", s.mean_episode_length, s.mean_task_reward, s.mean_gail_reward);
            }
        }
        Cmd::Synergy { config, play_data, n_syn, out } => {
            let mut cfg = load(&config)?;
            if let Some(n) = n_syn {
                cfg.synergy.n_syn = n;
            }
            cfg.validate()?;
            let map = myogail_cli::synergy(&cfg, play_data.as_deref(), &out)?;
            print!("{}", map.variance_report());
            println!("wrote {}", out.join("synergy.json").display());
        }
        Cmd::Aggregate { runs, out } => {
            let a = myogail_cli::aggregate(&runs)?;
            if let Some(dir) = out.parent() {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&out, a.to_csv())?;
            println!("aggregated {} seeds over {} iterations into {}", a.seeds.len(), a.env_steps.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { myogail_cli::EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
