use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::{SizingContext, SizingEnv, StepOutcome, Task};
use super::gae::{compute_gae, normalize_advantages};
use super::ppo::{ppo_update, PpoSample, PpoStats};
use super::{stream_seed, TrainConfig};
use crate::circuit::ParamVector;
use crate::deploy::greedy_rollouts;
use crate::error::Result;
use crate::nn::{sample_action, ActorCritic, Adam};
use crate::reward::sample_goal;

const WORKER_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;
const UPDATE_STREAM: u64 = 3;

/// Where each training episode's task comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskSource {
    /// A fresh goal per episode, drawn from the benchmark's goal space.
    RandomGoals,
    Fixed(Task),
}

/// Called with the running environment-evaluation count after every training step.
pub type EpisodeObserver<'o> = dyn FnMut(usize, &StepOutcome) + 'o;

/// One line of the training trace, written after every batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub batch: usize,
    pub env_evals: usize,
    pub mean_episode_reward: f64,
    pub success_rate: f64,
    pub actor_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub wall_ms: f64,
}

/// Greedy performance on the fixed evaluation goals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub env_evals: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
}

impl Evaluation {
    fn beats(&self, other: &Evaluation) -> bool {
        self.success_rate > other.success_rate
            || (self.success_rate == other.success_rate && self.mean_steps < other.mean_steps)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub start: ParamVector,
    pub final_policy: ActorCritic,
    /// Best policy by evaluation success, then by fewer steps; the final
    /// policy when no evaluation ran.
    pub best_policy: ActorCritic,
    pub best_eval: Option<Evaluation>,
    pub trace: Vec<TrainRecord>,
    pub evaluations: Vec<Evaluation>,
    /// Training simulations, the start point included.
    pub env_evals: usize,
    /// Simulations spent by greedy evaluations, outside the training budget.
    pub eval_sims: usize,
}

struct StepRecord {
    params: ParamVector,
    obs: Vec<f64>,
    log_prob: f64,
    value: f64,
    outcome: StepOutcome,
}

struct Worker<'a> {
    env: SizingEnv<'a>,
    rng: ChaCha8Rng,
    steps: Vec<StepRecord>,
    done: bool,
    success: bool,
}

/// Trains from the vanguard start on randomly sampled goals.
pub fn train(ctx: &SizingContext, start: &ParamVector, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    train_with(ctx, start, &TaskSource::RandomGoals, cfg, seed, &mut |_, _| {})
}

/// Same as [`train`] from the middle of the parameter grid.
pub fn train_without_vanguard(ctx: &SizingContext, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    train(ctx, &ctx.sim.graph().mid_grid(), cfg, seed)
}

pub fn train_with(
    ctx: &SizingContext,
    start: &ParamVector,
    tasks: &TaskSource,
    cfg: &TrainConfig,
    seed: u64,
    observer: &mut EpisodeObserver<'_>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    ctx.sim.graph().check_params(start)?;
    let start_spec = ctx.sim.evaluate_all_corners(start)?;
    let mut env_evals = 1;

    let mut policy = ActorCritic::new(ctx.policy_dims(), &mut ChaCha8Rng::seed_from_u64(stream_seed(seed, &[INIT_STREAM])));
    let mut adam = Adam::new(cfg.learning_rate);

    let eval_tasks: Vec<Task> = match tasks {
        TaskSource::RandomGoals if cfg.eval_interval > 0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[EVAL_STREAM]));
            (0..cfg.eval_goals)
                .map(|_| Task::goal(sample_goal(&ctx.benchmark().goal_space, &mut rng)))
                .collect()
        }
        _ => Vec::new(),
    };
    let mut next_eval = cfg.eval_interval;
    let mut evaluations = Vec::new();
    let mut eval_sims = 0;
    let mut best: Option<(Evaluation, ActorCritic)> = None;
    let mut evaluate = |policy: &ActorCritic, env_evals: usize, best: &mut Option<(Evaluation, ActorCritic)>| -> Result<Evaluation> {
        let results = greedy_rollouts(ctx, policy, &eval_tasks, start, &start_spec, cfg.max_steps)?;
        let n = results.len() as f64;
        let e = Evaluation {
            env_evals,
            success_rate: results.iter().filter(|r| r.success).count() as f64 / n,
            mean_steps: results.iter().map(|r| r.steps as f64).sum::<f64>() / n,
        };
        eval_sims += results.iter().map(|r| r.steps).sum::<usize>();
        if best.as_ref().is_none_or(|(b, _)| e.beats(b)) {
            *best = Some((e, policy.clone()));
        }
        Ok(e)
    };

    let mut trace = Vec::new();
    let mut batch = 0;
    while env_evals < cfg.total_env_evals {
        let clock = Instant::now();
        let mut workers = Vec::with_capacity(cfg.workers);
        for w in 0..cfg.workers {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[WORKER_STREAM, batch as u64, w as u64]));
            let task = match tasks {
                TaskSource::RandomGoals => Task::goal(sample_goal(&ctx.benchmark().goal_space, &mut rng)),
                TaskSource::Fixed(t) => t.clone(),
            };
            workers.push(Worker {
                env: SizingEnv::new(ctx, task, start.clone(), start_spec.clone(), cfg.max_steps)?,
                rng,
                steps: Vec::new(),
                done: false,
                success: false,
            });
        }
        collect(ctx, &policy, &mut workers)?;

        // Bootstrap values of truncated episodes.
        let truncated: Vec<usize> = (0..workers.len()).filter(|&i| !workers[i].success).collect();
        let mut last_values = vec![0.0; workers.len()];
        if !truncated.is_empty() {
            let input = ctx.policy_input(truncated.iter().map(|&i| &workers[i].env))?;
            let v = policy.values(&input)?;
            for (k, &i) in truncated.iter().enumerate() {
                last_values[i] = v.get(k, 0);
            }
        }

        let mut samples = Vec::new();
        let mut returns_sum = 0.0;
        let mut successes = 0;
        for (w, last) in workers.iter().zip(&last_values) {
            let rewards: Vec<f64> = w.steps.iter().map(|s| s.outcome.reward).collect();
            let values: Vec<f64> = w.steps.iter().map(|s| s.value).collect();
            let (adv, ret) = compute_gae(&rewards, &values, *last, w.success, cfg.gamma, cfg.gae_lambda);
            returns_sum += rewards.iter().sum::<f64>();
            successes += usize::from(w.success);
            for ((s, a), r) in w.steps.iter().zip(adv).zip(ret) {
                env_evals += 1;
                observer(env_evals, &s.outcome);
                if s.outcome.forced_keep {
                    continue;
                }
                samples.push(PpoSample {
                    params: s.params.clone(),
                    obs: s.obs.clone(),
                    actions: s.outcome.actions.clone(),
                    old_log_prob: s.log_prob,
                    advantage: a,
                    ret: r,
                });
            }
        }
        let mut adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
        normalize_advantages(&mut adv);
        for (s, a) in samples.iter_mut().zip(adv) {
            s.advantage = a;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[UPDATE_STREAM, batch as u64]));
        let stats = if samples.is_empty() {
            PpoStats::default()
        } else {
            ppo_update(&mut policy, &mut adam, ctx, &samples, cfg, &mut rng)?
        };

        let n = workers.len() as f64;
        trace.push(TrainRecord {
            batch,
            env_evals,
            mean_episode_reward: returns_sum / n,
            success_rate: successes as f64 / n,
            actor_loss: stats.actor_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        batch += 1;

        if !eval_tasks.is_empty() && env_evals >= next_eval {
            evaluations.push(evaluate(&policy, env_evals, &mut best)?);
            while next_eval <= env_evals {
                next_eval += cfg.eval_interval;
            }
        }
    }
    if !eval_tasks.is_empty() && evaluations.last().is_none_or(|e| e.env_evals != env_evals) {
        evaluations.push(evaluate(&policy, env_evals, &mut best)?);
    }
    let (best_eval, best_policy) = match best {
        Some((e, p)) => (Some(e), p),
        None => (None, policy.clone()),
    };
    Ok(TrainOutcome {
        start: start.clone(),
        final_policy: policy,
        best_policy,
        best_eval,
        trace,
        evaluations,
        env_evals,
        eval_sims,
    })
}

/// Runs every worker's episode to completion in lockstep, one batched forward per step.
fn collect(ctx: &SizingContext, policy: &ActorCritic, workers: &mut [Worker<'_>]) -> Result<()> {
    loop {
        let active: Vec<usize> = (0..workers.len()).filter(|&i| !workers[i].done).collect();
        if active.is_empty() {
            return Ok(());
        }
        let input = ctx.policy_input(active.iter().map(|&i| &workers[i].env))?;
        let logits = policy.logits(&input)?;
        let values = policy.values(&input)?;
        let mut running: Vec<&mut Worker<'_>> = workers.iter_mut().filter(|w| !w.done).collect();
        let stepped: Vec<Result<()>> = running
            .par_iter_mut()
            .enumerate()
            .map(|(k, w)| {
                let row = logits.row(k);
                let params = w.env.params().clone();
                let obs = w.env.observation();
                let sampled = sample_action(row, &mut w.rng);
                let out = w.env.step(&sampled.actions)?;
                let log_prob = sampled.log_prob;
                w.done = out.done;
                w.success = out.success;
                w.steps.push(StepRecord {
                    params,
                    obs,
                    log_prob,
                    value: values.get(k, 0),
                    outcome: out,
                });
                Ok(())
            })
            .collect();
        stepped.into_iter().collect::<Result<()>>()?;
    }
}
