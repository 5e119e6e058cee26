//! One sizing episode: device parameters move on the grid, every step is
//! scored against the task at all corners.

use serde::{Deserialize, Serialize};

use crate::circuit::{Benchmark, Direction, ParamVector, SpecKind};
use crate::error::{Error, Result};
use crate::nn::dist::KEEP;
use crate::nn::{apply_action, InputBuilder, ObsNormalizer, PolicyDims, PolicyInput};
use crate::reward::{fom_opamp, is_success, midpoint_goal, step_reward, DesignGoal, RewardConfig, N_SPECS};
use crate::sim::{Simulator, SpecMatrix};

/// Per-corner, per-spec multipliers on simulated specs (`alpha[corner][spec]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountFactors {
    pub alpha: Vec<[f64; N_SPECS]>,
}

impl DiscountFactors {
    pub fn identity(corners: usize) -> Self {
        Self {
            alpha: vec![[1.0; N_SPECS]; corners],
        }
    }

    /// Specs as scored: every goal spec scaled by its factor. Power follows current.
    pub fn apply(&self, spec: &SpecMatrix) -> SpecMatrix {
        let mut out = spec.clone();
        for (col, a) in out.columns.iter_mut().zip(&self.alpha) {
            for (i, kind) in SpecKind::ALL.into_iter().enumerate() {
                col.set(kind, col.get(kind) * a[i]);
            }
            col.power_w *= a[SpecKind::Current as usize];
        }
        out
    }

    /// True when every factor discounts in its spec's adverse direction.
    pub fn respects_directions(&self, goal: &DesignGoal) -> bool {
        self.alpha.iter().all(|a| {
            (0..N_SPECS).all(|i| match goal.directions[i] {
                Direction::AtLeast => a[i] > 0.0 && a[i] <= 1.0,
                Direction::AtMost => a[i] >= 1.0,
            })
        })
    }
}

/// What an episode optimizes.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    /// Meet a design goal at every corner, with specs optionally discounted.
    Goal {
        goal: DesignGoal,
        discount: Option<DiscountFactors>,
    },
    /// Maximize the worst-corner figure of merit divided by `reference`.
    Fom { reference: f64 },
}

impl Task {
    pub fn goal(goal: DesignGoal) -> Self {
        Task::Goal { goal, discount: None }
    }
}

/// Worst-corner performance: highest power, lowest GBW, and the FoM they give.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub power_w: f64,
    pub gbw_hz: f64,
    pub fom: f64,
}

pub fn worst_case(spec: &SpecMatrix, c_load_pf: f64) -> WorstCase {
    let mut w = spec.columns[0];
    for c in &spec.columns[1..] {
        w.power_w = w.power_w.max(c.power_w);
        w.gbw_hz = w.gbw_hz.min(c.gbw_hz);
    }
    WorstCase {
        power_w: w.power_w,
        gbw_hz: w.gbw_hz,
        fom: fom_opamp(&w, c_load_pf),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Actions actually applied.
    pub actions: Vec<usize>,
    /// The goal was met before the first step, so every parameter was kept
    /// regardless of the requested actions.
    pub forced_keep: bool,
    pub params: ParamVector,
    /// Simulated (undiscounted) specs of the new parameters.
    pub spec: SpecMatrix,
    pub reward: f64,
    pub success: bool,
    /// True when this step ends the episode (success or step limit).
    pub done: bool,
}

/// Everything an episode needs besides the policy: the circuit, its reward,
/// and the observation encoding.
pub struct SizingContext {
    pub sim: Simulator,
    pub reward: RewardConfig,
    pub normalizer: ObsNormalizer,
    pub inputs: InputBuilder,
}

impl SizingContext {
    pub fn new(sim: Simulator, reward: RewardConfig) -> Result<Self> {
        reward.validate()?;
        let normalizer = ObsNormalizer::from_goal_space(&sim.benchmark().goal_space)?;
        let inputs = InputBuilder::new(sim.benchmark());
        Ok(Self {
            sim,
            reward,
            normalizer,
            inputs,
        })
    }

    pub fn benchmark(&self) -> &Benchmark {
        self.sim.benchmark()
    }

    pub fn policy_dims(&self) -> PolicyDims {
        PolicyDims::for_benchmark(self.benchmark())
    }

    /// Policy input for a batch of environments.
    pub fn policy_input<'e, 'c: 'e>(&self, envs: impl IntoIterator<Item = &'e SizingEnv<'c>>) -> Result<PolicyInput> {
        let obs: Vec<(ParamVector, Vec<f64>)> = envs.into_iter().map(|e| (e.params.clone(), e.observation())).collect();
        let refs: Vec<(&ParamVector, &[f64])> = obs.iter().map(|(p, o)| (p, o.as_slice())).collect();
        self.inputs.build(self.benchmark(), &refs)
    }
}

pub struct SizingEnv<'a> {
    ctx: &'a SizingContext,
    task: Task,
    obs_goal: DesignGoal,
    params: ParamVector,
    spec: SpecMatrix,
    max_steps: usize,
    steps: usize,
    evaluations: usize,
}

impl<'a> SizingEnv<'a> {
    /// Episode at `start`, whose specs `start_spec` are supplied by the caller.
    pub fn new(ctx: &'a SizingContext, task: Task, start: ParamVector, start_spec: SpecMatrix, max_steps: usize) -> Result<Self> {
        if max_steps == 0 {
            return Err(Error::config("max_steps must be at least 1"));
        }
        ctx.sim.graph().check_params(&start)?;
        if start_spec.n_corners() != ctx.sim.corners().len() {
            return Err(Error::invariant("start specs do not cover every corner"));
        }
        let obs_goal = match &task {
            Task::Goal { goal, .. } => *goal,
            Task::Fom { .. } => midpoint_goal(&ctx.benchmark().goal_space),
        };
        Ok(Self {
            ctx,
            task,
            obs_goal,
            params: start,
            spec: start_spec,
            max_steps,
            steps: 0,
            evaluations: 0,
        })
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn spec(&self) -> &SpecMatrix {
        &self.spec
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    fn scored(&self, spec: &SpecMatrix) -> SpecMatrix {
        match &self.task {
            Task::Goal {
                discount: Some(d), ..
            } => d.apply(spec),
            _ => spec.clone(),
        }
    }

    /// `(reward, success)` of a simulated spec matrix under the task.
    pub fn score(&self, spec: &SpecMatrix) -> (f64, bool) {
        match &self.task {
            Task::Goal { goal, .. } => {
                let s = self.scored(spec);
                (step_reward(&s, goal, &self.ctx.reward), is_success(&s, goal))
            }
            Task::Fom { reference } => {
                let c_load = self.ctx.benchmark().load_capacitance_pf();
                (worst_case(spec, c_load).fom / reference, false)
            }
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        self.ctx.normalizer.observe(&self.obs_goal, &self.scored(&self.spec))
    }

    /// Applies `actions`, simulates, and scores. When the goal is already met
    /// before the first step, every parameter is kept.
    pub fn step(&mut self, actions: &[usize]) -> Result<StepOutcome> {
        if self.steps >= self.max_steps {
            return Err(Error::invariant("step after the episode ended"));
        }
        let forced_keep = self.steps == 0 && self.score(&self.spec).1;
        let actions: Vec<usize> = if forced_keep {
            vec![KEEP; actions.len()]
        } else {
            actions.to_vec()
        };
        let next = apply_action(&self.params, &actions, self.ctx.sim.graph());
        let spec = self.ctx.sim.evaluate_all_corners(&next)?;
        self.evaluations += 1;
        self.steps += 1;
        let (reward, success) = self.score(&spec);
        self.params = next.clone();
        self.spec = spec.clone();
        Ok(StepOutcome {
            actions,
            forced_keep,
            params: next,
            spec,
            reward,
            success,
            done: success || self.steps >= self.max_steps,
        })
    }
}
