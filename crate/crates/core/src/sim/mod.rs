//! Behavioral circuit evaluator: maps device parameters and a PVT corner to
//! circuit specifications using closed-form square-law equations.

mod models;
mod parasitic;
pub mod probe;

pub use models::{phase_margin_deg, ModelConstants};
pub use parasitic::{ParasiticModel, SpecFactors, MAX_BETA};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Benchmark, BenchmarkId, CircuitGraph, ParamVector, ProcessSpeed, PvtCorner, SpecKind};
use crate::error::{Error, Result};

/// Nominal threshold voltage magnitude for both device types (V).
pub const VTH0: f64 = 0.45;
/// Reference temperature of the mobility model (K).
pub const T_REF_K: f64 = 300.0;
/// Mobility temperature exponent.
pub const MOBILITY_TEMP_EXP: f64 = -1.5;
/// Threshold drift with temperature (V/K).
pub const VTH_TEMP_COEFF: f64 = -1e-3;

/// Device-level effect of a PVT corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerModifiers {
    pub mobility_scale_n: f64,
    pub mobility_scale_p: f64,
    pub vth_shift_n: f64,
    pub vth_shift_p: f64,
    pub vdd: f64,
    pub temperature_k: f64,
}

impl CornerModifiers {
    pub fn vth_n(&self) -> f64 {
        VTH0 + self.vth_shift_n
    }

    pub fn vth_p(&self) -> f64 {
        VTH0 + self.vth_shift_p
    }
}

fn process_factor(p: ProcessSpeed) -> (f64, f64) {
    // (mobility factor, threshold shift as a fraction of VTH0)
    match p {
        ProcessSpeed::Fast => (1.10, -0.10),
        ProcessSpeed::Typical => (1.00, 0.0),
        ProcessSpeed::Slow => (0.90, 0.10),
    }
}

pub fn corner_modifiers(corner: &PvtCorner) -> CornerModifiers {
    let t = corner.temperature_k();
    let temp_mob = (t / T_REF_K).powf(MOBILITY_TEMP_EXP);
    let temp_vth = VTH_TEMP_COEFF * (t - T_REF_K);
    let (mob_n, dv_n) = process_factor(corner.process_n);
    let (mob_p, dv_p) = process_factor(corner.process_p);
    CornerModifiers {
        mobility_scale_n: mob_n * temp_mob,
        mobility_scale_p: mob_p * temp_mob,
        vth_shift_n: dv_n * VTH0 + temp_vth,
        vth_shift_p: dv_p * VTH0 + temp_vth,
        vdd: corner.vdd,
        temperature_k: t,
    }
}

/// Specifications of one circuit at one corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecVector {
    pub gain_db: f64,
    pub bandwidth_hz: f64,
    pub phase_margin_deg: f64,
    pub current_a: f64,
    pub power_w: f64,
    pub gbw_hz: f64,
}

impl SpecVector {
    pub fn get(&self, kind: SpecKind) -> f64 {
        match kind {
            SpecKind::Gain => self.gain_db,
            SpecKind::Bandwidth => self.bandwidth_hz,
            SpecKind::PhaseMargin => self.phase_margin_deg,
            SpecKind::Current => self.current_a,
        }
    }

    pub fn set(&mut self, kind: SpecKind, value: f64) {
        match kind {
            SpecKind::Gain => self.gain_db = value,
            SpecKind::Bandwidth => self.bandwidth_hz = value,
            SpecKind::PhaseMargin => self.phase_margin_deg = value,
            SpecKind::Current => self.current_a = value,
        }
    }

    fn check(self, node: &str) -> Result<Self> {
        let all = [
            self.gain_db,
            self.bandwidth_hz,
            self.phase_margin_deg,
            self.current_a,
            self.power_w,
            self.gbw_hz,
        ];
        if all.iter().any(|v| !v.is_finite()) || self.bandwidth_hz <= 0.0 || self.power_w <= 0.0 {
            return Err(Error::Evaluation {
                node: node.to_string(),
                reason: format!("non-physical result {self:?}"),
            });
        }
        Ok(self)
    }
}

/// Specs x corners; column `j` holds the specs at corner `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecMatrix {
    pub columns: Vec<SpecVector>,
}

impl SpecMatrix {
    /// `(spec kinds, corners)`.
    pub fn shape(&self) -> (usize, usize) {
        (SpecKind::ALL.len(), self.columns.len())
    }

    pub fn get(&self, kind: SpecKind, corner: usize) -> f64 {
        self.columns[corner].get(kind)
    }

    pub fn n_corners(&self) -> usize {
        self.columns.len()
    }
}

/// The evaluation environment for one benchmark: graph, resolved model and corner set.
#[derive(Debug, Clone)]
pub struct Simulator {
    benchmark: Benchmark,
    model: models::Model,
    modifiers: Vec<CornerModifiers>,
}

impl Simulator {
    pub fn new(benchmark: Benchmark) -> Result<Self> {
        let constants = ModelConstants::for_benchmark(benchmark.id);
        Self::with_constants(benchmark, constants)
    }

    /// Like [`Simulator::new`] with explicit model constants.
    pub fn with_constants(benchmark: Benchmark, constants: ModelConstants) -> Result<Self> {
        let model = models::Model::resolve(benchmark.id, &benchmark.graph, constants)?;
        let modifiers = benchmark.corners.iter().map(corner_modifiers).collect();
        Ok(Self {
            benchmark,
            model,
            modifiers,
        })
    }

    pub fn for_benchmark(name: &str) -> Result<Self> {
        Self::new(crate::circuit::build_benchmark(name)?)
    }

    pub fn benchmark(&self) -> &Benchmark {
        &self.benchmark
    }

    pub fn id(&self) -> BenchmarkId {
        self.benchmark.id
    }

    pub fn graph(&self) -> &CircuitGraph {
        &self.benchmark.graph
    }

    pub fn corners(&self) -> &[PvtCorner] {
        &self.benchmark.corners
    }

    pub fn constants(&self) -> &ModelConstants {
        self.model.constants()
    }

    /// Specs at a single corner. Pure and deterministic.
    pub fn evaluate(&self, params: &ParamVector, corner: &PvtCorner) -> Result<SpecVector> {
        self.benchmark.graph.check_params(params)?;
        self.model.evaluate(params.values(), &corner_modifiers(corner))
    }

    /// Specs at every corner of the benchmark, in corner order.
    pub fn evaluate_all_corners(&self, params: &ParamVector) -> Result<SpecMatrix> {
        self.benchmark.graph.check_params(params)?;
        let eval = |(j, m): (usize, &CornerModifiers)| {
            self.model.evaluate(params.values(), m).map_err(|e| Error::CornerEvaluation {
                corner: j,
                source: Box::new(e),
            })
        };
        let columns = self.modifiers.iter().enumerate().map(eval).collect::<Result<Vec<_>>>()?;
        Ok(SpecMatrix { columns })
    }

    /// Same as [`Simulator::evaluate_all_corners`] but fans the corners out on the
    /// rayon pool. Results are merged in corner order.
    pub fn evaluate_all_corners_par(&self, params: &ParamVector) -> Result<SpecMatrix> {
        self.benchmark.graph.check_params(params)?;
        let columns = self
            .modifiers
            .par_iter()
            .enumerate()
            .map(|(j, m)| {
                self.model.evaluate(params.values(), m).map_err(|e| Error::CornerEvaluation {
                    corner: j,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SpecMatrix { columns })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_benchmark, extreme_corners};

    #[test]
    fn nominal_corner_mobility_is_near_one() {
        let m = corner_modifiers(&PvtCorner::nominal());
        assert!((m.mobility_scale_n - 1.0).abs() < 0.01);
        assert!((m.mobility_scale_p - 1.0).abs() < 0.01);
        assert_eq!(m.vdd, 1.2);
    }

    #[test]
    fn fast_cold_mobility_matches_formula() {
        let c = PvtCorner {
            process_n: ProcessSpeed::Fast,
            process_p: ProcessSpeed::Fast,
            vdd: 1.3,
            temperature_c: -40.0,
        };
        let m = corner_modifiers(&c);
        let expected = 1.10 * (233.15f64 / 300.0).powf(-1.5);
        assert!((m.mobility_scale_n - expected).abs() < 1e-12);
        // -10% of 0.45 V, plus -1 mV/K * (233.15 - 300)
        assert!((m.vth_shift_n - (-0.045 + 0.06685)).abs() < 1e-12);
    }

    #[test]
    fn slow_fast_corner_splits_device_types() {
        let c = PvtCorner {
            process_n: ProcessSpeed::Slow,
            process_p: ProcessSpeed::Fast,
            vdd: 1.1,
            temperature_c: 125.0,
        };
        let m = corner_modifiers(&c);
        assert!(m.mobility_scale_n < m.mobility_scale_p);
        assert!((m.mobility_scale_p / m.mobility_scale_n - 1.10 / 0.90).abs() < 1e-12);
        assert!(m.vth_shift_n > m.vth_shift_p);
    }

    #[test]
    fn batch_equals_stacked_single_calls() {
        let sim = Simulator::for_benchmark("two_stage").unwrap();
        let params = sim.graph().mid_grid();
        let m = sim.evaluate_all_corners(&params).unwrap();
        assert_eq!(m.shape(), (4, 16));
        for (j, corner) in extreme_corners().iter().enumerate() {
            assert_eq!(m.columns[j], sim.evaluate(&params, corner).unwrap());
        }
        assert_eq!(sim.evaluate_all_corners_par(&params).unwrap(), m);
    }

    #[test]
    fn off_grid_params_are_rejected() {
        let sim = Simulator::new(build_benchmark("two_stage").unwrap()).unwrap();
        let mut params = sim.graph().mid_grid();
        params.0[0] += 1.0;
        assert!(matches!(sim.evaluate(&params, &PvtCorner::nominal()), Err(Error::Invariant(_))));
    }
}
