//! PPO training of the actor-critic against the sizing environment.

mod env;
mod gae;
mod ppo;
mod train;

pub use env::{worst_case, DiscountFactors, SizingContext, SizingEnv, StepOutcome, Task, WorstCase};
pub use gae::{compute_gae, normalize_advantages};
pub use ppo::{ppo_loss, ppo_update, PpoSample, PpoStats};
pub use train::{
    train, train_with, train_without_vanguard, Evaluation, EpisodeObserver, TaskSource, TrainOutcome, TrainRecord,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Environment evaluations available to training.
    pub total_env_evals: usize,
    /// Episodes collected per batch, one per worker.
    pub workers: usize,
    pub max_steps: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Gradient-norm limit, applied to the actor and the critic separately.
    pub max_grad_norm: f64,
    /// Environment evaluations between greedy evaluations; 0 disables them.
    pub eval_interval: usize,
    pub eval_goals: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_env_evals: 20_000,
            workers: 6,
            max_steps: 50,
            gamma: 0.99,
            gae_lambda: 0.7,
            clip_eps: 0.2,
            epochs: 6,
            minibatch_size: 32,
            learning_rate: 1e-3,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            eval_interval: 2000,
            eval_goals: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.total_env_evals > 0, "train.total_env_evals must be positive"),
            (self.workers > 0, "train.workers must be positive"),
            (self.max_steps > 0, "train.max_steps must be positive"),
            (self.gamma > 0.0 && self.gamma <= 1.0, "train.gamma must lie in (0, 1]"),
            ((0.0..=1.0).contains(&self.gae_lambda), "train.gae_lambda must lie in [0, 1]"),
            (self.clip_eps > 0.0, "train.clip_eps must be positive"),
            (self.epochs > 0, "train.epochs must be positive"),
            (self.minibatch_size > 0, "train.minibatch_size must be positive"),
            (self.learning_rate > 0.0, "train.learning_rate must be positive"),
            (self.value_coef >= 0.0, "train.value_coef must be non-negative"),
            (self.entropy_coef >= 0.0, "train.entropy_coef must be non-negative"),
            (self.max_grad_norm > 0.0, "train.max_grad_norm must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::config(msg));
            }
        }
        Ok(())
    }
}

/// Seed of an independent random stream identified by `parts`.
pub fn stream_seed(seed: u64, parts: &[u64]) -> u64 {
    // splitmix64 finalizer over the running state
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        h = h.wrapping_add(p).wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}
