//! Op-amp device sizing under process, voltage and temperature variation.
//!
//! A Bayesian-optimization vanguard finds a starting point for a
//! graph-attention actor-critic trained with PPO against a closed-form
//! behavioral simulator. Trained policies are deployed on unseen design goals.

pub mod bo;
pub mod circuit;
pub mod config;
pub mod deploy;
pub mod error;
pub mod gp;
pub mod log;
pub mod nn;
pub mod pareto;
pub mod plots;
pub mod reward;
pub mod rl;
pub mod run;
pub mod sim;

pub use error::{Error, Result};
