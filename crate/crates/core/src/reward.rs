//! Variation-aware reward: per-corner sums of clipped normalized margins,
//! averaged over corners, with a fixed bonus when every corner meets every goal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Direction, GoalSampling, GoalSpace, SpecKind};
use crate::error::{Error, Result};
use crate::sim::{SpecMatrix, SpecVector};

pub const N_SPECS: usize = SpecKind::ALL.len();

/// One target per spec, in [`SpecKind::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignGoal {
    pub values: [f64; N_SPECS],
    pub directions: [Direction; N_SPECS],
}

impl DesignGoal {
    pub fn get(&self, kind: SpecKind) -> f64 {
        self.values[kind as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    #[serde(default = "default_weights")]
    pub weights: [f64; N_SPECS],
    #[serde(default = "default_bonus")]
    pub success_bonus: f64,
}

fn default_weights() -> [f64; N_SPECS] {
    [1.0; N_SPECS]
}

fn default_bonus() -> f64 {
    10.0
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            weights: default_weights(),
            success_bonus: default_bonus(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config("reward.weights must be finite and non-negative"));
        }
        if !(self.success_bonus.is_finite() && self.success_bonus > 0.0) {
            return Err(Error::config("reward.success_bonus must be positive"));
        }
        Ok(())
    }
}

pub fn sample_goal<R: Rng + ?Sized>(space: &GoalSpace, rng: &mut R) -> DesignGoal {
    let mut values = [0.0; N_SPECS];
    let mut directions = [Direction::AtLeast; N_SPECS];
    for (i, kind) in SpecKind::ALL.into_iter().enumerate() {
        let entry = space.entry(kind).expect("goal space covers every spec");
        let u: f64 = rng.random();
        values[i] = match entry.sampling {
            GoalSampling::Uniform { min, max } => min + u * (max - min),
            GoalSampling::LogUniform { min, max } => (min.ln() + u * (max.ln() - min.ln())).exp(),
            GoalSampling::Bound { bound, span } => bound + u * span,
        };
        directions[i] = entry.direction;
    }
    DesignGoal { values, directions }
}

/// Goal at the middle of every sampling range: `(max + min) / 2`.
pub fn midpoint_goal(space: &GoalSpace) -> DesignGoal {
    let mut values = [0.0; N_SPECS];
    let mut directions = [Direction::AtLeast; N_SPECS];
    for (i, kind) in SpecKind::ALL.into_iter().enumerate() {
        let entry = space.entry(kind).expect("goal space covers every spec");
        let (lo, hi) = entry.sampling.range();
        values[i] = 0.5 * (hi + lo);
        directions[i] = entry.direction;
    }
    DesignGoal { values, directions }
}

fn margin(s: f64, g: f64, direction: Direction) -> f64 {
    let m = match direction {
        Direction::AtLeast => (s - g) / (s + g),
        Direction::AtMost => (g - s) / (g + s),
    };
    m.min(0.0)
}

/// `min((s - g)/(s + g), 0)`, mirrored for at-most specs. Lies in `(-1, 0]`.
pub fn normalized_margin(s: f64, g: f64, direction: Direction) -> Result<f64> {
    if !(s + g > 0.0) {
        return Err(Error::Evaluation {
            node: "reward".to_string(),
            reason: format!("spec {s} and goal {g} do not have a positive sum"),
        });
    }
    Ok(margin(s, g, direction))
}

/// Margins of one corner in [`SpecKind::ALL`] order.
pub fn corner_margins(spec: &SpecVector, goal: &DesignGoal) -> [f64; N_SPECS] {
    let mut out = [0.0; N_SPECS];
    for (i, kind) in SpecKind::ALL.into_iter().enumerate() {
        out[i] = margin(spec.get(kind), goal.values[i], goal.directions[i]);
    }
    out
}

/// Weighted margin sum `r_j` of every corner.
pub fn sub_rewards(spec: &SpecMatrix, goal: &DesignGoal, cfg: &RewardConfig) -> Vec<f64> {
    spec.columns
        .iter()
        .map(|col| {
            corner_margins(col, goal)
                .iter()
                .zip(&cfg.weights)
                .map(|(m, w)| w * m)
                .sum()
        })
        .collect()
}

pub fn step_reward(spec: &SpecMatrix, goal: &DesignGoal, cfg: &RewardConfig) -> f64 {
    if is_success(spec, goal) {
        return cfg.success_bonus;
    }
    let r = sub_rewards(spec, goal, cfg);
    r.iter().sum::<f64>() / r.len() as f64
}

/// True iff every spec meets its goal at every corner.
pub fn is_success(spec: &SpecMatrix, goal: &DesignGoal) -> bool {
    spec.columns
        .iter()
        .all(|col| corner_margins(col, goal).iter().all(|&m| m == 0.0))
}

pub fn episode_return(rewards: &[f64]) -> f64 {
    rewards.iter().sum()
}

/// `GBW * C_L / P` in MHz*pF/uW.
pub fn fom_opamp(spec: &SpecVector, c_load_pf: f64) -> f64 {
    (spec.gbw_hz * 1e-6) * c_load_pf / (spec.power_w * 1e6)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(gain: f64, bw: f64, pm: f64, cur: f64) -> SpecVector {
        SpecVector {
            gain_db: gain,
            bandwidth_hz: bw,
            phase_margin_deg: pm,
            current_a: cur,
            power_w: 1.2 * cur,
            gbw_hz: bw * 10.0,
        }
    }

    fn goal() -> DesignGoal {
        DesignGoal {
            values: [15.0, 5e6, 65.0, 3e-3],
            directions: [Direction::AtLeast, Direction::AtLeast, Direction::AtLeast, Direction::AtMost],
        }
    }

    #[test]
    fn margin_examples() {
        assert_eq!(normalized_margin(40.0, 40.0, Direction::AtLeast).unwrap(), 0.0);
        let m = normalized_margin(36.0, 40.0, Direction::AtLeast).unwrap();
        assert!((m - (-4.0 / 76.0)).abs() < 1e-15);
        assert_eq!(normalized_margin(50.0, 40.0, Direction::AtLeast).unwrap(), 0.0);
        assert!(normalized_margin(4e-3, 3e-3, Direction::AtMost).unwrap() < 0.0);
        assert!(normalized_margin(-1.0, 1.0, Direction::AtLeast).is_err());
    }

    #[test]
    fn all_met_gives_bonus() {
        let m = SpecMatrix {
            columns: vec![spec(16.0, 6e6, 70.0, 2e-3); 16],
        };
        assert_eq!(step_reward(&m, &goal(), &RewardConfig::default()), 10.0);
        assert!(is_success(&m, &goal()));
    }

    #[test]
    fn one_failing_corner_averages() {
        let mut cols = vec![spec(16.0, 6e6, 70.0, 2e-3); 16];
        cols[3].gain_db = 10.0;
        let m = SpecMatrix { columns: cols };
        let expected = (10.0 - 15.0) / 25.0 / 16.0;
        let r = step_reward(&m, &goal(), &RewardConfig::default());
        assert!((r - expected).abs() < 1e-15);
        assert!(!is_success(&m, &goal()));
    }

    #[test]
    fn episode_return_sums() {
        assert_eq!(episode_return(&[]), 0.0);
        assert!((episode_return(&[-0.1, -0.05, 10.0]) - 9.85).abs() < 1e-12);
    }

    #[test]
    fn fom_unit_arithmetic() {
        let s = SpecVector {
            gain_db: 40.0,
            bandwidth_hz: 1e6,
            phase_margin_deg: 60.0,
            current_a: 1e-4 / 1.2,
            power_w: 100e-6,
            gbw_hz: 1e6,
        };
        assert!((fom_opamp(&s, 100.0) - 1.0).abs() < 1e-12);
    }
}
