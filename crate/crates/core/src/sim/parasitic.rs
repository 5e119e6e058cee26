use serde::{Deserialize, Serialize};

use super::SpecVector;
use crate::circuit::{CircuitGraph, ParamVector};
use crate::error::{Error, Result};

/// Largest degradation coefficient accepted by [`ParasiticModel::validate`].
pub const MAX_BETA: f64 = 0.15;

/// Synthetic post-layout degradation: wiring load grows with total transistor width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParasiticModel {
    #[serde(default = "default_beta")]
    pub beta_gain: f64,
    #[serde(default = "default_beta")]
    pub beta_bandwidth: f64,
    #[serde(default = "default_beta")]
    pub beta_phase_margin: f64,
    #[serde(default = "default_beta")]
    pub beta_power: f64,
    #[serde(default = "default_load_scale")]
    pub load_scale: f64,
}

fn default_beta() -> f64 {
    0.04
}

fn default_load_scale() -> f64 {
    1.0
}

impl Default for ParasiticModel {
    fn default() -> Self {
        Self::uniform(default_beta())
    }
}

impl ParasiticModel {
    pub fn uniform(beta: f64) -> Self {
        Self {
            beta_gain: beta,
            beta_bandwidth: beta,
            beta_phase_margin: beta,
            beta_power: beta,
            load_scale: default_load_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, b) in [
            ("beta_gain", self.beta_gain),
            ("beta_bandwidth", self.beta_bandwidth),
            ("beta_phase_margin", self.beta_phase_margin),
            ("beta_power", self.beta_power),
        ] {
            if !(0.0..=MAX_BETA).contains(&b) {
                return Err(Error::config(format!("parasitic.{name} = {b} outside [0, {MAX_BETA}]")));
            }
        }
        if !(self.load_scale.is_finite() && self.load_scale >= 0.0) {
            return Err(Error::config("parasitic.load_scale must be non-negative"));
        }
        Ok(())
    }

    /// Normalized total transistor width in `[0, 1]`, times `load_scale` (clamped to 1).
    pub fn load(&self, graph: &CircuitGraph, params: &ParamVector) -> f64 {
        let mut used = 0.0;
        let mut span = 0.0;
        for ((_, slot), &v) in graph.labeled_slots().zip(&params.0) {
            if slot.name == "w" {
                used += v - slot.lower;
                span += slot.upper - slot.lower;
            }
        }
        if span <= 0.0 {
            return 0.0;
        }
        (self.load_scale * used / span).clamp(0.0, 1.0)
    }

    /// Multiplicative factor applied to each spec of a circuit at `params`.
    pub fn factors(&self, graph: &CircuitGraph, params: &ParamVector) -> SpecFactors {
        let load = self.load(graph, params);
        SpecFactors {
            gain: 1.0 - self.beta_gain * load,
            bandwidth: 1.0 - self.beta_bandwidth * load,
            phase_margin: 1.0 - self.beta_phase_margin * load,
            power: 1.0 + self.beta_power * load,
        }
    }

    pub fn apply(&self, graph: &CircuitGraph, params: &ParamVector, spec: &SpecVector) -> SpecVector {
        let f = self.factors(graph, params);
        SpecVector {
            gain_db: spec.gain_db * f.gain,
            bandwidth_hz: spec.bandwidth_hz * f.bandwidth,
            phase_margin_deg: spec.phase_margin_deg * f.phase_margin,
            current_a: spec.current_a * f.power,
            power_w: spec.power_w * f.power,
            gbw_hz: spec.gbw_hz * f.bandwidth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecFactors {
    pub gain: f64,
    pub bandwidth: f64,
    pub phase_margin: f64,
    /// Applies to both power and current.
    pub power: f64,
}
