//! Greedy deployment of a trained policy, failure export, and the
//! parasitic-aware sizing loop.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::circuit::{Direction, ParamVector, SpecKind};
use crate::error::{Error, Result};
use crate::nn::{greedy_action, ActorCritic, CheckpointMeta};
use crate::reward::{corner_margins, is_success, DesignGoal, N_SPECS};
use crate::rl::{DiscountFactors, SizingContext, SizingEnv, Task};
use crate::sim::{ParasiticModel, SpecMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    /// 1-based simulation index within the deployment.
    pub step: usize,
    pub params: ParamVector,
    pub spec: SpecMatrix,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentResult {
    pub goal: DesignGoal,
    pub trajectory: Vec<TrajectoryStep>,
    pub success: bool,
    pub steps: usize,
    /// Index into `trajectory` of the highest reward, earliest on ties.
    pub best_step: usize,
    /// Wall time spent simulating.
    pub sim_seconds: f64,
}

impl DeploymentResult {
    pub fn final_params(&self) -> &ParamVector {
        &self.trajectory[self.steps - 1].params
    }

    pub fn final_spec(&self) -> &SpecMatrix {
        &self.trajectory[self.steps - 1].spec
    }
}

/// Index of the first maximum.
pub fn best_step(rewards: &[f64]) -> usize {
    let mut best = 0;
    for (i, r) in rewards.iter().enumerate() {
        if *r > rewards[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeployMetrics {
    pub n_goals: usize,
    /// Fraction of goals met.
    pub n_success: f64,
    /// Mean simulations per deployment, failures included.
    pub n_step: f64,
    /// Mean seconds per simulation.
    pub t_sim: f64,
    /// `n_success / (n_step * t_sim)`, in 1/s.
    pub fom_deploy: f64,
}

impl DeployMetrics {
    pub fn new(n_goals: usize, n_success: f64, n_step: f64, t_sim: f64) -> Self {
        Self {
            n_goals,
            n_success,
            n_step,
            t_sim,
            fom_deploy: n_success / (n_step * t_sim),
        }
    }

    pub fn from_results(results: &[DeploymentResult]) -> Self {
        let n = results.len();
        let steps: usize = results.iter().map(|r| r.steps).sum();
        let secs: f64 = results.iter().map(|r| r.sim_seconds).sum();
        let success = results.iter().filter(|r| r.success).count();
        Self::new(
            n,
            success as f64 / n as f64,
            steps as f64 / n as f64,
            secs / steps.max(1) as f64,
        )
    }
}

/// Greedy rollouts of every goal task from `start`, batched in lockstep.
pub fn greedy_rollouts(
    ctx: &SizingContext,
    policy: &ActorCritic,
    tasks: &[Task],
    start: &ParamVector,
    start_spec: &SpecMatrix,
    max_steps: usize,
) -> Result<Vec<DeploymentResult>> {
    let mut envs = Vec::with_capacity(tasks.len());
    let mut results = Vec::with_capacity(tasks.len());
    for t in tasks {
        let Task::Goal { goal, .. } = t else {
            return Err(Error::config("deployment needs a design goal"));
        };
        envs.push(SizingEnv::new(ctx, t.clone(), start.clone(), start_spec.clone(), max_steps)?);
        results.push(DeploymentResult {
            goal: *goal,
            trajectory: Vec::new(),
            success: false,
            steps: 0,
            best_step: 0,
            sim_seconds: 0.0,
        });
    }
    let mut done = vec![false; tasks.len()];
    loop {
        let active: Vec<usize> = (0..envs.len()).filter(|&i| !done[i]).collect();
        if active.is_empty() {
            break;
        }
        let input = ctx.policy_input(active.iter().map(|&i| &envs[i]))?;
        let logits = policy.logits(&input)?;
        for (k, &i) in active.iter().enumerate() {
            let actions = greedy_action(logits.row(k));
            let clock = Instant::now();
            let out = envs[i].step(&actions)?;
            let r = &mut results[i];
            r.sim_seconds += clock.elapsed().as_secs_f64();
            r.trajectory.push(TrajectoryStep {
                step: envs[i].steps(),
                params: out.params,
                spec: out.spec,
                reward: out.reward,
            });
            r.success = out.success;
            r.steps = envs[i].steps();
            done[i] = out.done;
        }
    }
    for r in &mut results {
        let rewards: Vec<f64> = r.trajectory.iter().map(|s| s.reward).collect();
        r.best_step = best_step(&rewards);
    }
    Ok(results)
}

/// Deploys a checkpointed policy on every goal from `start`.
pub fn deploy(
    ctx: &SizingContext,
    checkpoint: (&ActorCritic, &CheckpointMeta),
    goals: &[DesignGoal],
    start: &ParamVector,
    max_steps: usize,
) -> Result<(Vec<DeploymentResult>, DeployMetrics)> {
    let (policy, meta) = checkpoint;
    let name = ctx.sim.id().name();
    if meta.benchmark != name {
        return Err(Error::Checkpoint(format!(
            "checkpoint was trained on `{}`, not `{name}`",
            meta.benchmark
        )));
    }
    if goals.is_empty() {
        return Err(Error::config("deployment needs at least one goal"));
    }
    let start_spec = ctx.sim.evaluate_all_corners(start)?;
    let tasks: Vec<Task> = goals.iter().map(|g| Task::goal(*g)).collect();
    let results = greedy_rollouts(ctx, policy, &tasks, start, &start_spec, max_steps)?;
    let metrics = DeployMetrics::from_results(&results);
    Ok((results, metrics))
}

/// Best step of a failed deployment, for manual tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub goal: DesignGoal,
    pub best_step: usize,
    /// Parameter labels (`node.slot`) in slot order.
    pub names: Vec<String>,
    pub params: ParamVector,
    /// Normalized margins per corner, in spec order.
    pub margins: Vec<[f64; N_SPECS]>,
    pub reward: f64,
    /// Aligned text table: parameters over a window of steps around the best one.
    pub table: String,
}

/// Steps shown on each side of the best step in the report table.
pub const REPORT_WINDOW: usize = 2;

pub fn export_failure(ctx: &SizingContext, result: &DeploymentResult) -> Result<FailureReport> {
    if result.success {
        return Err(Error::invariant("failure export on a successful deployment"));
    }
    if result.trajectory.is_empty() {
        return Err(Error::invariant("failure export on an empty trajectory"));
    }
    let best = &result.trajectory[result.best_step];
    let graph = ctx.sim.graph();
    let names: Vec<String> = graph.labeled_slots().map(|(n, s)| format!("{n}.{}", s.name)).collect();
    let units: Vec<String> = graph.labeled_slots().map(|(_, s)| s.unit.clone()).collect();
    let margins = best.spec.columns.iter().map(|c| corner_margins(c, &result.goal)).collect();

    let lo = result.best_step.saturating_sub(REPORT_WINDOW);
    let hi = (result.best_step + REPORT_WINDOW + 1).min(result.trajectory.len());
    let window = &result.trajectory[lo..hi];
    let labels: Vec<String> = names.iter().zip(&units).map(|(n, u)| format!("{n} ({u})")).collect();
    let first = labels.iter().map(String::len).max().unwrap_or(0).max("Reward".len());
    let mut table = String::new();
    let _ = write!(table, "{:<first$}", "Parameter");
    for s in window {
        let mark = if s.step == best.step { "*" } else { "" };
        let _ = write!(table, " {:>12}", format!("Step {}{mark}", s.step));
    }
    table.push('\n');
    for (i, label) in labels.iter().enumerate() {
        let _ = write!(table, "{label:<first$}");
        for s in window {
            let _ = write!(table, " {:>12}", format!("{:.4}", s.params.0[i]));
        }
        table.push('\n');
    }
    let _ = write!(table, "{:<first$}", "Reward");
    for s in window {
        let _ = write!(table, " {:>12}", format!("{:.3}", s.reward));
    }
    table.push('\n');

    Ok(FailureReport {
        goal: result.goal,
        best_step: result.best_step,
        names,
        params: best.params.clone(),
        margins,
        reward: best.reward,
        table,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParasiticRound {
    pub discount: DiscountFactors,
    /// Pre-layout deployment met the discounted goal.
    pub pre_success: bool,
    pub pre_steps: usize,
    /// Post-layout specs met the goal.
    pub post_success: bool,
    pub params: ParamVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParasiticOutcome {
    pub goal: DesignGoal,
    pub params: ParamVector,
    pub rounds: usize,
    pub success: bool,
    pub history: Vec<ParasiticRound>,
    /// Failure report of the last pre-layout deployment when it failed.
    pub failure: Option<FailureReport>,
}

/// Post-layout specs of `params` given their pre-layout specs.
pub fn post_layout(ctx: &SizingContext, model: &ParasiticModel, params: &ParamVector, pre: &SpecMatrix) -> SpecMatrix {
    SpecMatrix {
        columns: pre
            .columns
            .iter()
            .map(|c| model.apply(ctx.sim.graph(), params, c))
            .collect(),
    }
}

/// New discount factors from one pre/post comparison. Factors only move for
/// specs that degraded; the others keep their previous value.
pub fn update_discount(
    previous: &DiscountFactors,
    goal: &DesignGoal,
    pre: &SpecMatrix,
    post: &SpecMatrix,
) -> DiscountFactors {
    let mut alpha = previous.alpha.clone();
    for (a, (p, q)) in alpha.iter_mut().zip(pre.columns.iter().zip(&post.columns)) {
        for (i, kind) in SpecKind::ALL.into_iter().enumerate() {
            let (s_pre, s_post) = (p.get(kind), q.get(kind));
            let degraded = match goal.directions[i] {
                Direction::AtLeast => s_pre >= s_post,
                Direction::AtMost => s_post >= s_pre,
            };
            if degraded && s_pre > 0.0 {
                a[i] = s_post / s_pre;
            }
        }
    }
    DiscountFactors { alpha }
}

/// Deploys against discounted specs, checks post-layout performance, and
/// tightens the discount until the post-layout design meets `goal`.
pub fn parasitic_sizing(
    ctx: &SizingContext,
    policy: &ActorCritic,
    goal: &DesignGoal,
    model: &ParasiticModel,
    start: &ParamVector,
    max_rounds: usize,
    max_steps: usize,
) -> Result<ParasiticOutcome> {
    if max_rounds == 0 {
        return Err(Error::config("parasitic loop needs at least one round"));
    }
    model.validate()?;
    let mut discount = DiscountFactors::identity(ctx.sim.corners().len());
    let mut st = start.clone();
    let mut history = Vec::new();
    for round in 1..=max_rounds {
        let start_spec = ctx.sim.evaluate_all_corners(&st)?;
        let task = Task::Goal {
            goal: *goal,
            discount: Some(discount.clone()),
        };
        let result = greedy_rollouts(ctx, policy, &[task], &st, &start_spec, max_steps)?
            .pop()
            .expect("one rollout per task");
        let x_pre = result.final_params().clone();
        if !result.success {
            history.push(ParasiticRound {
                discount,
                pre_success: false,
                pre_steps: result.steps,
                post_success: false,
                params: x_pre.clone(),
            });
            return Ok(ParasiticOutcome {
                goal: *goal,
                params: x_pre,
                rounds: round,
                success: false,
                history,
                failure: Some(export_failure(ctx, &result)?),
            });
        }
        let pre = result.final_spec();
        let post = post_layout(ctx, model, &x_pre, pre);
        let ok = is_success(&post, goal);
        let next = update_discount(&discount, goal, pre, &post);
        history.push(ParasiticRound {
            discount,
            pre_success: true,
            pre_steps: result.steps,
            post_success: ok,
            params: x_pre.clone(),
        });
        if ok {
            return Ok(ParasiticOutcome {
                goal: *goal,
                params: x_pre,
                rounds: round,
                success: true,
                history,
                failure: None,
            });
        }
        discount = next;
        st = x_pre;
    }
    Ok(ParasiticOutcome {
        goal: *goal,
        params: st,
        rounds: max_rounds,
        success: false,
        history,
        failure: None,
    })
}
