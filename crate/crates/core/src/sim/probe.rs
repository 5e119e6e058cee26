//! Coarse feasibility probe used to calibrate model constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Simulator;
use crate::circuit::{Direction, ParamVector, SpecKind};
use crate::reward::{sample_goal, DesignGoal, N_SPECS};

/// Worst value of each spec over all corners, in the direction the goal binds.
fn worst_case(sim: &Simulator, x: &ParamVector, directions: &[Direction; N_SPECS]) -> Option<[f64; N_SPECS]> {
    let m = sim.evaluate_all_corners(x).ok()?;
    let mut out = [0.0; N_SPECS];
    for (i, kind) in SpecKind::ALL.into_iter().enumerate() {
        let vals = m.columns.iter().map(|c| c.get(kind));
        out[i] = match directions[i] {
            Direction::AtLeast => vals.fold(f64::INFINITY, f64::min),
            Direction::AtMost => vals.fold(f64::NEG_INFINITY, f64::max),
        };
    }
    Some(out)
}

fn meets(worst: &[f64; N_SPECS], goal: &DesignGoal) -> bool {
    (0..N_SPECS).all(|i| match goal.directions[i] {
        Direction::AtLeast => worst[i] >= goal.values[i],
        Direction::AtMost => worst[i] <= goal.values[i],
    })
}

/// Fraction of sampled goals met under all corners by at least one point of a
/// random on-grid pool. A lower bound on the true feasible fraction.
pub fn feasible_fraction(sim: &Simulator, n_goals: usize, pool: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = &sim.benchmark().goal_space;
    let goals: Vec<DesignGoal> = (0..n_goals).map(|_| sample_goal(space, &mut rng)).collect();
    let Some(first) = goals.first() else {
        return 0.0;
    };
    let graph = sim.graph();
    let mut points = Vec::with_capacity(pool);
    for _ in 0..pool {
        // half the pool is skewed toward the lower bounds, where small devices live
        let skew = rng.random_bool(0.5);
        let unit: Vec<f64> = (0..graph.param_count())
            .map(|_| {
                let u: f64 = rng.random();
                if skew {
                    u * u * u
                } else {
                    u
                }
            })
            .collect();
        if let Some(w) = worst_case(sim, &graph.from_unit(&unit), &first.directions) {
            points.push(w);
        }
    }
    let met = goals.iter().filter(|g| points.iter().any(|p| meets(p, g))).count();
    met as f64 / n_goals as f64
}
