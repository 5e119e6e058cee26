use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    extreme_corners, CircuitGraph, DeviceKind, DeviceNode, GoalSampling, GoalSpace, PvtCorner, SpecKind,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkId {
    SingleStage,
    TwoStage,
    FoldedCascode,
    Nmcf,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 4] = [
        BenchmarkId::SingleStage,
        BenchmarkId::TwoStage,
        BenchmarkId::FoldedCascode,
        BenchmarkId::Nmcf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkId::SingleStage => "single_stage",
            BenchmarkId::TwoStage => "two_stage",
            BenchmarkId::FoldedCascode => "folded_cascode",
            BenchmarkId::Nmcf => "nmcf",
        }
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkId::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::config(format!("unknown benchmark `{s}` (expected one of single_stage, two_stage, folded_cascode, nmcf)")))
    }
}

/// A circuit together with its corner set and goal sampling space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub id: BenchmarkId,
    pub graph: CircuitGraph,
    pub corners: Vec<PvtCorner>,
    pub goal_space: GoalSpace,
}

impl Benchmark {
    /// Load capacitance in pF, used by the op-amp figure of merit.
    pub fn load_capacitance_pf(&self) -> f64 {
        self.graph.fixed_value("cl").unwrap_or(1.0)
    }
}

/// Builds one of the four built-in op-amp benchmarks by name.
pub fn build_benchmark(name: &str) -> Result<Benchmark> {
    let id: BenchmarkId = name.parse()?;
    Ok(build(id))
}

pub(crate) fn build(id: BenchmarkId) -> Benchmark {
    let (graph, goal_space) = match id {
        BenchmarkId::SingleStage => single_stage(),
        BenchmarkId::TwoStage => two_stage(),
        BenchmarkId::FoldedCascode => folded_cascode(),
        BenchmarkId::Nmcf => nmcf(),
    };
    Benchmark {
        id,
        graph,
        corners: extreme_corners(),
        goal_space,
    }
}

fn nmos(name: &str, w: (f64, f64, f64)) -> DeviceNode {
    DeviceNode::transistor(name, DeviceKind::nmos(), w)
}

fn pmos(name: &str, w: (f64, f64, f64)) -> DeviceNode {
    DeviceNode::transistor(name, DeviceKind::pmos(), w)
}

// Phase margin in these behavioral models never exceeds 90 degrees, so a
// bound-only goal close to 90 gets a narrower sampling span.
fn pm_goal(space: &mut GoalSpace, bound: f64) {
    let span = super::BOUND_GOAL_SPAN.min(90.0 - bound - 1.0);
    for e in &mut space.entries {
        if e.kind == SpecKind::PhaseMargin {
            e.sampling = GoalSampling::Bound { bound, span };
        }
    }
}

/// Telescopic cascode OTA with an NMOS input pair.
fn single_stage() -> (CircuitGraph, GoalSpace) {
    let wp = (200.0, 2000.0, 10.0);
    let wn = (2000.0, 10_000.0, 10.0);
    let nodes = vec![
        pmos("mp1", wp), // mirror, diode side
        pmos("mp2", wp), // mirror, output side
        pmos("mp3", wp), // cascode, diode side
        pmos("mp4", wp), // cascode, output side
        nmos("mn1", wn), // input pair
        nmos("mn2", wn), // input cascode
        nmos("mn3", wn), // tail
        DeviceNode::fixed_load("cl", 0.12),
    ];
    let nets: &[(&str, &[&str])] = &[
        ("ntail", &["mn1", "mn3"]),
        ("nx", &["mn1", "mn2"]),
        ("ndiode", &["mn2", "mp3", "mp1", "mp2"]),
        ("nmid1", &["mp1", "mp3"]),
        ("nmid2", &["mp2", "mp4"]),
        ("vcasp", &["mp3", "mp4"]),
        ("out", &["mn2", "mp4", "cl"]),
    ];
    let graph = CircuitGraph::from_nets("single_stage", nodes, nets).expect("built-in graph");
    let mut goals = GoalSpace::standard((40.0, 45.0), (1e-5, 1e-4), 50.0, (0.5e6, 1.0e6));
    pm_goal(&mut goals, 50.0);
    (graph, goals)
}

/// Miller-compensated two-stage op-amp: NMOS input pair with PMOS mirror
/// load, PMOS common-source second stage.
fn two_stage() -> (CircuitGraph, GoalSpace) {
    let w = (1000.0, 100_000.0, 1000.0);
    let nodes = vec![
        pmos("mp1", w), // first-stage mirror load
        pmos("mp2", w), // second-stage common source
        nmos("mn1", w), // input pair
        nmos("mn2", w), // first-stage tail
        nmos("mn3", w), // second-stage current sink
        nmos("mn4", w), // bias reference
        DeviceNode::capacitor("c", (0.1, 10.0, 0.1)),
        DeviceNode::fixed_load("cl", 1.0),
    ];
    let nets: &[(&str, &[&str])] = &[
        ("n1", &["mn1", "mp1", "mp2", "c"]),
        ("nmir", &["mn1", "mp1"]),
        ("ntail", &["mn1", "mn2"]),
        ("vbias", &["mn2", "mn3", "mn4"]),
        ("out", &["mn3", "mp2", "c", "cl"]),
    ];
    let graph = CircuitGraph::from_nets("two_stage", nodes, nets).expect("built-in graph");
    let mut goals = GoalSpace::standard((10.0, 20.0), (1e-3, 1e-2), 60.0, (1e6, 20e6));
    pm_goal(&mut goals, 60.0);
    (graph, goals)
}

/// Folded-cascode OTA with a PMOS input pair.
fn folded_cascode() -> (CircuitGraph, GoalSpace) {
    let nodes = vec![
        pmos("mp1", (1000.0, 10_000.0, 200.0)), // input pair
        pmos("mp2", (1000.0, 10_000.0, 200.0)), // tail and top current sources
        nmos("mn1", (160.0, 1000.0, 20.0)),     // folding current sinks
        nmos("mn2", (160.0, 1000.0, 20.0)),     // NMOS cascodes
        nmos("mn3", (160.0, 1000.0, 20.0)),     // cascode bias
        DeviceNode::capacitor("c", (0.1, 9.9, 0.2)),
        DeviceNode::fixed_load("cl", 1.0),
    ];
    let nets: &[(&str, &[&str])] = &[
        ("ntail", &["mp1", "mp2"]),
        ("nfold", &["mp1", "mn1", "mn2"]),
        ("out", &["mn2", "mp2", "c", "cl"]),
        ("vbn", &["mn1", "mn3"]),
        ("vcasn", &["mn2", "mn3"]),
    ];
    let graph = CircuitGraph::from_nets("folded_cascode", nodes, nets).expect("built-in graph");
    let mut goals = GoalSpace::standard((20.0, 30.0), (1e-4, 1e-3), 85.0, (4e6, 6e6));
    pm_goal(&mut goals, 85.0);
    (graph, goals)
}

/// Three-stage nested-Miller op-amp with a feedforward transconductance stage.
fn nmcf() -> (CircuitGraph, GoalSpace) {
    let wa = (10_000.0, 50_000.0, 1000.0);
    let nodes = vec![
        pmos("mp1", wa),                         // input pair
        pmos("mp2", wa),                         // first-stage tail
        pmos("mp3", wa),                         // second-stage current source
        pmos("mp4", (50_000.0, 250_000.0, 10_000.0)), // output common source
        nmos("mn1", (2000.0, 20_000.0, 1000.0)), // first-stage mirror load
        nmos("mn2", (2000.0, 20_000.0, 1000.0)), // second-stage input
        nmos("mn3", (2000.0, 20_000.0, 1000.0)), // output current sink
        nmos("mn4", wa),                         // feedforward transconductor
        DeviceNode::capacitor("c1", (25.0, 50.0, 0.5)),
        DeviceNode::capacitor("c2", (1.0, 25.0, 0.5)),
        DeviceNode::fixed_load("cl", 100.0),
    ];
    let nets: &[(&str, &[&str])] = &[
        ("ntail", &["mp1", "mp2"]),
        ("o1", &["mp1", "mn1", "mn2", "mn4", "c1"]),
        ("o2", &["mn2", "mp3", "mp4", "c2"]),
        ("out", &["mp4", "mn3", "mn4", "c1", "c2", "cl"]),
        ("vbp", &["mp2", "mp3"]),
    ];
    let graph = CircuitGraph::from_nets("nmcf", nodes, nets).expect("built-in graph");
    let mut goals = GoalSpace::standard((40.0, 45.0), (1e-3, 1e-2), 55.0, (1e6, 2e6));
    pm_goal(&mut goals, 55.0);
    (graph, goals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Direction, SpecKind};

    #[test]
    fn two_stage_matches_design_table() {
        let b = build_benchmark("two_stage").unwrap();
        let g = &b.goal_space;
        assert_eq!(g.entry(SpecKind::Gain).unwrap().sampling.range(), (10.0, 20.0));
        assert_eq!(g.entry(SpecKind::Bandwidth).unwrap().sampling.range(), (1e6, 20e6));
        assert_eq!(g.entry(SpecKind::Current).unwrap().sampling.range(), (1e-3, 1e-2));
        let pm = g.entry(SpecKind::PhaseMargin).unwrap();
        assert_eq!(pm.sampling.range().0, 60.0);
        assert_eq!(pm.direction, Direction::AtLeast);
        assert_eq!(g.entry(SpecKind::Current).unwrap().direction, Direction::AtMost);

        let mp1 = &b.graph.nodes[0];
        assert_eq!((mp1.slots[0].lower, mp1.slots[0].upper, mp1.slots[0].step), (1000.0, 100_000.0, 1000.0));
        let c = b.graph.nodes.iter().find(|n| n.name == "c").unwrap();
        assert_eq!((c.slots[0].lower, c.slots[0].upper, c.slots[0].step), (0.1, 10.0, 0.1));
        assert_eq!(b.load_capacitance_pf(), 1.0);
        // 6 transistors x (w, f) + compensation cap
        assert_eq!(b.graph.param_count(), 13);
    }

    #[test]
    fn single_stage_load_is_fixed() {
        let b = build_benchmark("single_stage").unwrap();
        let cl = b.graph.nodes.iter().find(|n| n.name == "cl").unwrap();
        assert!(cl.slots.is_empty());
        assert_eq!(cl.fixed_value, Some(0.12));
    }

    #[test]
    fn every_benchmark_has_sixteen_corners() {
        for id in BenchmarkId::ALL {
            let b = build_benchmark(id.name()).unwrap();
            assert_eq!(b.corners.len(), 16, "{id}");
            b.graph.validate().unwrap();
            b.goal_space.validate().unwrap();
        }
        assert_eq!(build_benchmark("nmcf").unwrap().load_capacitance_pf(), 100.0);
    }

    #[test]
    fn unknown_benchmark_is_config_error() {
        assert!(matches!(build_benchmark("three_stage"), Err(Error::Config(_))));
    }

    #[test]
    fn canonical_order_transistors_then_passives_then_loads() {
        for id in BenchmarkId::ALL {
            let g = build(id).graph;
            let rank = |n: &DeviceNode| match n.kind.code {
                2 => 0,
                1 => 1,
                3 => 2,
                _ => 3,
            };
            let ranks: Vec<_> = g.nodes.iter().map(rank).collect();
            let mut sorted = ranks.clone();
            sorted.sort();
            assert_eq!(ranks, sorted, "{id}");
        }
    }
}
