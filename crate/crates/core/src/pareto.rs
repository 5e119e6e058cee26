//! Figure-of-merit optimization without a design goal, and the
//! power/bandwidth Pareto frontier of everything evaluated on the way.

use std::cell::RefCell;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bo::{optimize, BoConfig};
use crate::circuit::ParamVector;
use crate::error::{Error, Result};
use crate::rl::{stream_seed, train_with, worst_case, SizingContext, Task, TaskSource, TrainConfig, WorstCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParetoMethod {
    Rl,
    Bo,
    Random,
}

impl ParetoMethod {
    pub const ALL: [ParetoMethod; 3] = [ParetoMethod::Rl, ParetoMethod::Bo, ParetoMethod::Random];

    pub fn name(self) -> &'static str {
        match self {
            ParetoMethod::Rl => "rl",
            ParetoMethod::Bo => "bo",
            ParetoMethod::Random => "random",
        }
    }
}

impl FromStr for ParetoMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown pareto method `{s}` (expected rl, bo or random)")))
    }
}

/// Worst-corner power and GBW of one evaluated design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub power_w: f64,
    pub gbw_hz: f64,
    pub fom: f64,
}

impl From<WorstCase> for FrontierPoint {
    fn from(w: WorstCase) -> Self {
        Self {
            power_w: w.power_w,
            gbw_hz: w.gbw_hz,
            fom: w.fom,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoOutcome {
    pub method: ParetoMethod,
    pub evaluations: usize,
    pub best_fom: f64,
    pub best_params: ParamVector,
    /// Best FoM after each evaluation.
    pub best_trace: Vec<f64>,
    /// Non-dominated points, power ascending.
    pub frontier: Vec<FrontierPoint>,
}

/// Points not dominated in (lower power, higher GBW), sorted by power
/// ascending. Duplicates appear once.
pub fn pareto_frontier(points: &[FrontierPoint]) -> Vec<FrontierPoint> {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.power_w.total_cmp(&b.power_w).then(b.gbw_hz.total_cmp(&a.gbw_hz)));
    let mut out: Vec<FrontierPoint> = Vec::new();
    for p in sorted {
        if out.last().is_none_or(|q| p.gbw_hz > q.gbw_hz) {
            out.push(p);
        }
    }
    out
}

/// True when `a` is at least as good as `b` in both objectives and better in one.
pub fn dominates(a: &FrontierPoint, b: &FrontierPoint) -> bool {
    a.power_w <= b.power_w && a.gbw_hz >= b.gbw_hz && (a.power_w < b.power_w || a.gbw_hz > b.gbw_hz)
}

/// Records evaluations up to a fixed count; later ones are ignored so every
/// method is compared at the same budget.
struct Tracker {
    limit: usize,
    points: Vec<FrontierPoint>,
    best_trace: Vec<f64>,
    best: Option<(f64, ParamVector)>,
}

impl Tracker {
    fn new(limit: usize) -> Self {
        Self {
            limit,
            points: Vec::new(),
            best_trace: Vec::new(),
            best: None,
        }
    }

    fn record(&mut self, params: &ParamVector, w: WorstCase) {
        if self.points.len() >= self.limit {
            return;
        }
        self.points.push(w.into());
        if self.best.as_ref().is_none_or(|(f, _)| w.fom > *f) {
            self.best = Some((w.fom, params.clone()));
        }
        self.best_trace.push(self.best.as_ref().map_or(w.fom, |b| b.0));
    }
}

/// Maximizes the worst-corner op-amp figure of merit with `budget` simulations.
pub fn pareto_optimize(
    ctx: &SizingContext,
    budget: usize,
    method: ParetoMethod,
    train_cfg: &TrainConfig,
    bo_cfg: &BoConfig,
    seed: u64,
) -> Result<ParetoOutcome> {
    if budget == 0 {
        return Err(Error::config("pareto budget must be positive"));
    }
    let graph = ctx.sim.graph();
    let c_load = ctx.benchmark().load_capacitance_pf();
    let tracker = RefCell::new(Tracker::new(budget));
    let evaluate = |x: &ParamVector| -> Result<WorstCase> {
        let w = worst_case(&ctx.sim.evaluate_all_corners(x)?, c_load);
        tracker.borrow_mut().record(x, w);
        Ok(w)
    };
    match method {
        ParetoMethod::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[budget as u64]));
            for _ in 0..budget {
                let u: Vec<f64> = (0..graph.param_count()).map(|_| rng.random()).collect();
                evaluate(&graph.from_unit(&u))?;
            }
        }
        ParetoMethod::Bo => {
            let start = graph.mid_grid();
            let reference = evaluate(&start)?.fom;
            // GP cost grows cubically with history, so `bo.max_sims` caps the run.
            let cfg = BoConfig {
                max_sims: budget.min(bo_cfg.max_sims).saturating_sub(1).max(2 * graph.param_count()),
                improvement_window: budget,
                ..bo_cfg.clone()
            };
            optimize(graph, |x| Ok((evaluate(x)?.fom / reference).ln()), &cfg, seed)?;
        }
        ParetoMethod::Rl => {
            // A short BO run on the same objective picks the episode start.
            let bo = BoConfig {
                max_sims: bo_cfg.max_sims.min(budget / 2).max(2 * graph.param_count()),
                ..bo_cfg.clone()
            };
            let state = optimize(graph, |x| Ok(evaluate(x)?.fom.ln()), &bo, seed)?;
            let start = state.best_sample().expect("non-empty history").params.clone();
            let reference = state.best_reward().expect("non-empty history").exp();
            let cfg = TrainConfig {
                total_env_evals: budget.saturating_sub(state.evaluations()).max(1),
                eval_interval: 0,
                ..train_cfg.clone()
            };
            train_with(
                ctx,
                &start,
                &TaskSource::Fixed(Task::Fom { reference }),
                &cfg,
                seed,
                &mut |_, out| {
                    tracker.borrow_mut().record(&out.params, worst_case(&out.spec, c_load));
                },
            )?;
        }
    }
    let t = tracker.into_inner();
    let (best_fom, best_params) = t.best.expect("at least one evaluation");
    Ok(ParetoOutcome {
        method,
        evaluations: t.best_trace.len(),
        best_fom,
        best_params,
        best_trace: t.best_trace,
        frontier: pareto_frontier(&t.points),
    })
}
