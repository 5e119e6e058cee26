use serde::{Deserialize, Serialize};

use crate::circuit::{GoalSpace, SpecKind};
use crate::error::{Error, Result};
use crate::reward::{DesignGoal, N_SPECS};
use crate::sim::SpecMatrix;

/// Normalized values are clipped to this magnitude.
pub const OBS_CLIP: f64 = 5.0;

/// Affine map of one spec onto `[-1, 1]` over its goal range, optionally in log10.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecScale {
    pub lo: f64,
    pub hi: f64,
    pub log10: bool,
}

impl SpecScale {
    pub fn apply(&self, v: f64) -> f64 {
        let (x, lo, hi) = if self.log10 {
            (v.max(1e-300).log10(), self.lo.log10(), self.hi.log10())
        } else {
            (v, self.lo, self.hi)
        };
        (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-OBS_CLIP, OBS_CLIP)
    }
}

/// Builds the observation vector `[goal (N) | spec matrix (N per corner)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsNormalizer {
    pub scales: [SpecScale; N_SPECS],
}

impl ObsNormalizer {
    pub fn from_goal_space(space: &GoalSpace) -> Result<Self> {
        let mut scales = [SpecScale {
            lo: 0.0,
            hi: 1.0,
            log10: false,
        }; N_SPECS];
        for (i, kind) in SpecKind::ALL.into_iter().enumerate() {
            let entry = space
                .entry(kind)
                .ok_or_else(|| Error::config(format!("goal space has no entry for {}", kind.label())))?;
            let (lo, hi) = entry.sampling.range();
            if !(hi > lo) || (kind.log_scaled() && lo <= 0.0) {
                return Err(Error::config(format!("cannot normalize {} over [{lo}, {hi}]", kind.label())));
            }
            scales[i] = SpecScale {
                lo,
                hi,
                log10: kind.log_scaled(),
            };
        }
        Ok(Self { scales })
    }

    pub fn obs_dim(&self, corners: usize) -> usize {
        N_SPECS * (1 + corners)
    }

    /// Goal first, then every corner's specs in corner order.
    pub fn observe(&self, goal: &DesignGoal, spec: &SpecMatrix) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.obs_dim(spec.n_corners()));
        out.extend((0..N_SPECS).map(|i| self.scales[i].apply(goal.values[i])));
        for col in &spec.columns {
            for (i, kind) in SpecKind::ALL.into_iter().enumerate() {
                out.push(self.scales[i].apply(col.get(kind)));
            }
        }
        out
    }
}
