use std::path::PathBuf;
use std::process::ExitCode;

use ampsizer::config::{parse_config, ExperimentConfig};
use ampsizer::run::{cmd_run, Command};
use clap::{Parser, ValueEnum};

/// Worker threads for simulation and rollouts; defaults to all cores.
const THREADS_ENV: &str = "AMPSIZER_THREADS";

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Stage {
    /// Bayesian-optimization search for the starting point.
    Vanguard,
    /// PPO training from the saved starting point.
    Train,
    /// Greedy deployment of the best checkpoint on sampled goals.
    Deploy,
    /// Parasitic-aware sizing for each configured degradation coefficient.
    Parasitic,
    /// Figure-of-merit optimization with each configured method.
    Pareto,
    /// Vanguard, train and deploy, into a fresh results log.
    All,
}

impl From<Stage> for Command {
    fn from(s: Stage) -> Self {
        match s {
            Stage::Vanguard => Command::Vanguard,
            Stage::Train => Command::Train,
            Stage::Deploy => Command::Deploy,
            Stage::Parasitic => Command::Parasitic,
            Stage::Pareto => Command::Pareto,
            Stage::All => Command::All,
        }
    }
}

/// Op-amp sizing under PVT variation.
#[derive(Debug, Parser)]
#[command(version, after_help = "Set AMPSIZER_THREADS to limit worker threads.")]
struct Cli {
    #[arg(value_enum)]
    stage: Stage,
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Independent vanguard runs.
    #[arg(long, value_name = "N")]
    bo_repeats: Option<usize>,
    /// Simulation budget for training and for pareto runs.
    #[arg(long, value_name = "N")]
    budget: Option<usize>,
    /// Deployment goal count.
    #[arg(long, value_name = "N")]
    goals: Option<usize>,
}

fn configure(cli: &Cli) -> ampsizer::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out {
        cfg.output_dir = d.clone();
    }
    if let Some(n) = cli.bo_repeats {
        cfg.bo_repeats = n;
    }
    if let Some(n) = cli.budget {
        cfg.train.total_env_evals = n;
        cfg.pareto.budget = n;
    }
    if let Some(n) = cli.goals {
        cfg.deploy.goals = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: {e}");
                    return ExitCode::FAILURE;
                }
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{v}`");
                return ExitCode::FAILURE;
            }
        }
    }
    let result = configure(&cli).and_then(|cfg| cmd_run(cli.stage.into(), &cfg));
    match result {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            println!("results in {}", summary.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
