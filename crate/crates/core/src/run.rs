//! Experiment orchestration: one function per pipeline stage, all writing
//! into a single run directory.
//!
//! Layout of a run directory:
//!
//! | path | contents |
//! |---|---|
//! | `config.toml` | configuration snapshot; rerunning from it reproduces `results.jsonl` |
//! | `results.jsonl` | results log |
//! | `start.json` | vanguard starting point |
//! | `checkpoints/best.json`, `checkpoints/final.json` | policy checkpoints |
//! | `plots/*.csv` | plot tables |

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bo::run_vanguard_repeated;
use crate::circuit::ParamVector;
use crate::config::ExperimentConfig;
use crate::deploy::{deploy, export_failure, parasitic_sizing};
use crate::error::{Error, Result};
use crate::log::{read_log, BoTraceRecord, DeployRecord, FailureRecord, ParasiticRecord, ParetoRecord, Payload, ResultsLog, TrainEntry};
use crate::nn::{load_checkpoint, save_checkpoint, ActorCritic, CheckpointMeta};
use crate::pareto::pareto_optimize;
use crate::plots::emit_plot_data;
use crate::reward::{sample_goal, DesignGoal};
use crate::rl::{stream_seed, train, SizingContext};
use crate::sim::Simulator;

pub const CONFIG_FILE: &str = "config.toml";
pub const LOG_FILE: &str = "results.jsonl";
pub const START_FILE: &str = "start.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const BEST_CHECKPOINT: &str = "best.json";
pub const FINAL_CHECKPOINT: &str = "final.json";
pub const PLOT_DIR: &str = "plots";

const DEPLOY_STREAM: u64 = 100;
const PARASITIC_STREAM: u64 = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Vanguard,
    Train,
    Deploy,
    Parasitic,
    Pareto,
    /// Vanguard, training and deployment in sequence, into a fresh log.
    All,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Vanguard,
        Command::Train,
        Command::Deploy,
        Command::Parasitic,
        Command::Pareto,
        Command::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Vanguard => "vanguard",
            Command::Train => "train",
            Command::Deploy => "deploy",
            Command::Parasitic => "parasitic",
            Command::Pareto => "pareto",
            Command::All => "all",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config(format!("unknown command `{s}`")))
    }
}

/// Vanguard result saved for later stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPoint {
    pub benchmark: String,
    pub params: ParamVector,
    pub reward: f64,
}

/// Human-readable lines describing what a command did.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub lines: Vec<String>,
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
    ctx: SizingContext,
    log: ResultsLog,
    summary: RunSummary,
}

/// Runs one command with the configuration's output directory.
pub fn cmd_run(command: Command, cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    let log_path = dir.join(LOG_FILE);
    let log = if command == Command::All {
        ResultsLog::create(&log_path)?
    } else {
        ResultsLog::append_to(&log_path)?
    };
    let ctx = SizingContext::new(Simulator::for_benchmark(&cfg.benchmark)?, cfg.reward.clone())?;
    let mut run = Run {
        cfg,
        dir: dir.clone(),
        ctx,
        log,
        summary: RunSummary {
            out_dir: dir.clone(),
            lines: Vec::new(),
        },
    };
    match command {
        Command::Vanguard => run.vanguard()?,
        Command::Train => run.train()?,
        Command::Deploy => run.deploy()?,
        Command::Parasitic => run.parasitic()?,
        Command::Pareto => run.pareto()?,
        Command::All => {
            run.vanguard()?;
            run.train()?;
            run.deploy()?;
        }
    }
    drop(run.log);
    let records = read_log(&log_path)?.complete()?;
    emit_plot_data(&records, &dir.join(PLOT_DIR))?;
    Ok(run.summary)
}

impl Run<'_> {
    fn note(&mut self, line: String) {
        self.summary.lines.push(line);
    }

    fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            benchmark: self.cfg.benchmark.clone(),
            normalization: self.ctx.normalizer.clone(),
            dims: self.ctx.policy_dims(),
        }
    }

    fn start(&self) -> Result<ParamVector> {
        let path = self.dir.join(START_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::config(format!("no starting point at {} ({e}); run `vanguard` first", path.display())))?;
        let start: StartPoint = serde_json::from_str(&text)?;
        if start.benchmark != self.cfg.benchmark {
            return Err(Error::config(format!(
                "starting point belongs to `{}`, not `{}`",
                start.benchmark, self.cfg.benchmark
            )));
        }
        self.ctx.sim.graph().check_params(&start.params)?;
        Ok(start.params)
    }

    fn checkpoint(&self) -> Result<ActorCritic> {
        let path = self.dir.join(CHECKPOINT_DIR).join(BEST_CHECKPOINT);
        if !path.exists() {
            return Err(Error::Checkpoint(format!("no checkpoint at {}; run `train` first", path.display())));
        }
        let (policy, meta) = load_checkpoint(&path, Some(&self.cfg.benchmark))?;
        if meta.dims != self.ctx.policy_dims() {
            return Err(Error::Checkpoint("checkpoint dimensions do not match the benchmark".into()));
        }
        Ok(policy)
    }

    fn goals(&self, stream: u64, n: usize) -> Vec<DesignGoal> {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(self.cfg.seed, &[stream]));
        (0..n).map(|_| sample_goal(&self.ctx.benchmark().goal_space, &mut rng)).collect()
    }

    fn vanguard(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let (start, state) = run_vanguard_repeated(&self.ctx.sim, &cfg.reward, &cfg.bo, cfg.seed, cfg.bo_repeats)?;
        for r in BoTraceRecord::trace(&state) {
            self.log.write(Payload::Bo(r))?;
        }
        let reward = state.best_reward().expect("vanguard returns a non-empty history");
        let point = StartPoint {
            benchmark: cfg.benchmark.clone(),
            params: start,
            reward,
        };
        std::fs::write(self.dir.join(START_FILE), serde_json::to_string_pretty(&point)?)?;
        self.note(format!(
            "vanguard: {} evaluations, start reward {reward:.4}",
            state.evaluations()
        ));
        Ok(())
    }

    fn train(&mut self) -> Result<()> {
        let start = self.start()?;
        let out = train(&self.ctx, &start, &self.cfg.train, self.cfg.seed)?;
        let mut evals = out.evaluations.iter().peekable();
        for b in &out.trace {
            self.log.write(Payload::Train(TrainEntry::Batch(b.clone())))?;
            while let Some(e) = evals.next_if(|e| e.env_evals <= b.env_evals) {
                self.log.write(Payload::Train(TrainEntry::Eval(*e)))?;
            }
        }
        for e in evals {
            self.log.write(Payload::Train(TrainEntry::Eval(*e)))?;
        }
        let dir = self.dir.join(CHECKPOINT_DIR);
        std::fs::create_dir_all(&dir)?;
        let meta = self.meta();
        save_checkpoint(&dir.join(BEST_CHECKPOINT), &out.best_policy, &meta)?;
        save_checkpoint(&dir.join(FINAL_CHECKPOINT), &out.final_policy, &meta)?;
        let line = match out.best_eval {
            Some(e) => format!(
                "train: {} env evals, best evaluation at {} ({:.1}% success, {:.1} steps)",
                out.env_evals,
                e.env_evals,
                100.0 * e.success_rate,
                e.mean_steps
            ),
            None => format!("train: {} env evals", out.env_evals),
        };
        self.note(line);
        Ok(())
    }

    fn deploy(&mut self) -> Result<()> {
        let policy = self.checkpoint()?;
        let start = self.start()?;
        let goals = self.goals(DEPLOY_STREAM, self.cfg.deploy.goals);
        let (results, metrics) = deploy(&self.ctx, (&policy, &self.meta()), &goals, &start, self.cfg.train.max_steps)?;
        self.log.write(Payload::Deploy(DeployRecord {
            metrics,
            steps: results.iter().map(|r| r.steps).collect(),
            success: results.iter().map(|r| r.success).collect(),
        }))?;
        for (i, r) in results.iter().enumerate().filter(|(_, r)| !r.success) {
            let report = export_failure(&self.ctx, r)?;
            self.log.write(Payload::Failure(FailureRecord { goal_index: i, report }))?;
        }
        self.note(format!(
            "deploy: {:.1}% of {} goals met, {:.2} simulations per goal, FoM_deploy {:.1}/s",
            100.0 * metrics.n_success,
            metrics.n_goals,
            metrics.n_step,
            metrics.fom_deploy
        ));
        Ok(())
    }

    fn parasitic(&mut self) -> Result<()> {
        let policy = self.checkpoint()?;
        let start = self.start()?;
        let p = &self.cfg.parasitic;
        let max_steps = self.cfg.train.max_steps;
        let goals = self.goals(PARASITIC_STREAM, p.goals);
        let (pre, _) = deploy(&self.ctx, (&policy, &self.meta()), &goals, &start, max_steps)?;
        for &beta in &p.betas {
            let model = p.model(beta);
            let (mut solvable, mut converged) = (0, 0);
            for (i, goal) in goals.iter().enumerate() {
                let outcome = parasitic_sizing(&self.ctx, &policy, goal, &model, &start, p.max_rounds, max_steps)?;
                if pre[i].success {
                    solvable += 1;
                    converged += usize::from(outcome.success);
                }
                self.log.write(Payload::Parasitic(ParasiticRecord {
                    beta,
                    goal_index: i,
                    pre_layout_solvable: pre[i].success,
                    outcome,
                }))?;
            }
            self.note(format!(
                "parasitic beta={beta}: {converged}/{solvable} pre-layout-solvable goals met post-layout within {} rounds",
                p.max_rounds
            ));
        }
        Ok(())
    }

    fn pareto(&mut self) -> Result<()> {
        let cfg = self.cfg;
        for &method in &cfg.pareto.methods {
            let outcome = pareto_optimize(&self.ctx, cfg.pareto.budget, method, &cfg.train, &cfg.bo, cfg.seed)?;
            self.note(format!(
                "pareto {}: best FoM {:.3} after {} simulations, {} frontier points",
                method.name(),
                outcome.best_fom,
                outcome.evaluations,
                outcome.frontier.len()
            ));
            self.log.write(Payload::Pareto(ParetoRecord {
                budget: cfg.pareto.budget,
                outcome,
            }))?;
        }
        Ok(())
    }
}

/// Loads a run directory's configuration snapshot.
pub fn load_snapshot(dir: &Path) -> Result<ExperimentConfig> {
    crate::config::parse_config(&dir.join(CONFIG_FILE))
}
