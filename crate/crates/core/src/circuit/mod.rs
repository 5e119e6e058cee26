//! Circuit topologies, device parameter spaces, PVT corners and the node
//! feature encoding consumed by the policy network.

mod benchmarks;
mod file;

pub use benchmarks::{build_benchmark, Benchmark, BenchmarkId};
pub use file::CircuitFile;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the binary device-type code in a node feature row.
pub const KIND_BITS: usize = 3;
/// Width of the per-node parameter block in a node feature row.
pub const PARAM_BLOCK: usize = 2;
/// Total node feature width.
pub const NODE_FEATURE_DIM: usize = KIND_BITS + PARAM_BLOCK;

/// Relative tolerance used when deciding whether a value sits on a grid point.
const GRID_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviceKind {
    pub code: u8,
    pub label: String,
}

impl DeviceKind {
    pub fn new(code: u8, label: impl Into<String>) -> Self {
        Self {
            code,
            label: label.into(),
        }
    }

    pub fn nmos() -> Self {
        Self::new(1, "NMOS")
    }

    pub fn pmos() -> Self {
        Self::new(2, "PMOS")
    }

    pub fn cap() -> Self {
        Self::new(3, "CAP")
    }

    pub fn load() -> Self {
        Self::new(4, "LOAD")
    }

    /// Most significant bit first: code 1 encodes as `[0, 0, 1]`.
    pub fn bits(&self) -> [f64; KIND_BITS] {
        let mut out = [0.0; KIND_BITS];
        for (i, bit) in out.iter_mut().enumerate() {
            let shift = KIND_BITS - 1 - i;
            *bit = f64::from((self.code >> shift) & 1);
        }
        out
    }
}

/// One tunable parameter of a device: bounds and grid step in device units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub name: String,
    pub unit: String,
    pub lower: f64,
    pub upper: f64,
    pub step: f64,
}

impl ParamSlot {
    pub fn new(name: &str, unit: &str, lower: f64, upper: f64, step: f64) -> Self {
        Self {
            name: name.to_string(),
            unit: unit.to_string(),
            lower,
            upper,
            step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.step.is_finite()) {
            return Err(Error::invariant(format!("slot `{}` has non-finite bounds", self.name)));
        }
        if self.lower >= self.upper {
            return Err(Error::invariant(format!(
                "slot `{}`: lower {} must be below upper {}",
                self.name, self.lower, self.upper
            )));
        }
        if self.step <= 0.0 {
            return Err(Error::invariant(format!("slot `{}`: step must be positive", self.name)));
        }
        let span = (self.upper - self.lower) / self.step;
        if (span - span.round()).abs() > GRID_TOL * span.max(1.0) {
            return Err(Error::invariant(format!(
                "slot `{}`: range [{}, {}] is not a multiple of step {}",
                self.name, self.lower, self.upper, self.step
            )));
        }
        Ok(())
    }

    /// Number of grid points, bounds included.
    pub fn levels(&self) -> usize {
        ((self.upper - self.lower) / self.step).round() as usize + 1
    }

    pub fn value_at(&self, index: usize) -> f64 {
        self.lower + index as f64 * self.step
    }

    /// Grid index of an on-grid value, or `None` when the value is off-grid or out of bounds.
    pub fn index_of(&self, value: f64) -> Option<usize> {
        let t = (value - self.lower) / self.step;
        let k = t.round();
        if (t - k).abs() > GRID_TOL * t.abs().max(1.0) {
            return None;
        }
        if k < 0.0 || k as usize >= self.levels() {
            return None;
        }
        Some(k as usize)
    }

    /// Clamp to bounds, then snap to the nearest grid point. Exact ties go to the lower point.
    pub fn clamp_to_grid(&self, value: f64) -> f64 {
        let v = value.clamp(self.lower, self.upper);
        let t = (v - self.lower) / self.step;
        let k = (t - 0.5).ceil().clamp(0.0, (self.levels() - 1) as f64);
        self.value_at(k as usize)
    }

    pub fn normalize(&self, value: f64) -> f64 {
        (value - self.lower) / (self.upper - self.lower)
    }

    pub fn midpoint(&self) -> f64 {
        self.value_at((self.levels() - 1) / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceNode {
    pub name: String,
    pub kind: DeviceKind,
    pub slots: Vec<ParamSlot>,
    /// Value of a non-tunable device (e.g. a load capacitance in pF).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_value: Option<f64>,
}

impl DeviceNode {
    pub fn transistor(name: &str, kind: DeviceKind, width: (f64, f64, f64)) -> Self {
        Self {
            name: name.to_string(),
            kind,
            slots: vec![
                ParamSlot::new("w", "nm", width.0, width.1, width.2),
                ParamSlot::new("f", "fingers", 1.0, 16.0, 1.0),
            ],
            fixed_value: None,
        }
    }

    pub fn capacitor(name: &str, range: (f64, f64, f64)) -> Self {
        Self {
            name: name.to_string(),
            kind: DeviceKind::cap(),
            slots: vec![ParamSlot::new("c", "pF", range.0, range.1, range.2)],
            fixed_value: None,
        }
    }

    pub fn fixed_load(name: &str, value_pf: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: DeviceKind::load(),
            slots: Vec::new(),
            fixed_value: Some(value_pf),
        }
    }

    pub fn is_transistor(&self) -> bool {
        self.slots.len() == 2
    }
}

/// Device graph of a circuit. Node order is canonical and defines the
/// [`ParamVector`] layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitGraph {
    pub name: String,
    pub nodes: Vec<DeviceNode>,
    pub edges: Vec<(usize, usize)>,
}

impl CircuitGraph {
    /// Builds and validates a graph. Edges are normalized to `(min, max)` and deduplicated.
    pub fn new(name: &str, nodes: Vec<DeviceNode>, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::invariant(format!("self-loop on node {a}")));
            }
            if a >= nodes.len() || b >= nodes.len() {
                return Err(Error::invariant(format!("edge ({a}, {b}) out of range")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let graph = Self {
            name: name.to_string(),
            nodes,
            edges: set.into_iter().collect(),
        };
        graph.validate()?;
        Ok(graph)
    }

    /// Builds the edge set by connecting every pair of devices that share a net.
    pub fn from_nets(name: &str, nodes: Vec<DeviceNode>, nets: &[(&str, &[&str])]) -> Result<Self> {
        let index = |n: &str| {
            nodes
                .iter()
                .position(|d| d.name == n)
                .ok_or_else(|| Error::config(format!("net references unknown device `{n}`")))
        };
        let mut edges = Vec::new();
        for (_, members) in nets {
            let ids = members.iter().map(|m| index(m)).collect::<Result<Vec<_>>>()?;
            for (i, &a) in ids.iter().enumerate() {
                for &b in &ids[i + 1..] {
                    if a != b {
                        edges.push((a, b));
                    }
                }
            }
        }
        Self::new(name, nodes, edges)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::invariant("circuit graph has no nodes"));
        }
        if self.nodes.len() > 1 {
            let mut seen = vec![false; self.nodes.len()];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(u) = stack.pop() {
                for &(a, b) in &self.edges {
                    let next = if a == u {
                        b
                    } else if b == u {
                        a
                    } else {
                        continue;
                    };
                    if !seen[next] {
                        seen[next] = true;
                        stack.push(next);
                    }
                }
            }
            if let Some(i) = seen.iter().position(|s| !s) {
                return Err(Error::invariant(format!(
                    "circuit graph is not connected: `{}` unreachable",
                    self.nodes[i].name
                )));
            }
        }
        for node in &self.nodes {
            if node.kind.code > 7 {
                return Err(Error::invariant(format!(
                    "device kind code {} of `{}` does not fit in {KIND_BITS} bits",
                    node.kind.code, node.name
                )));
            }
            if node.slots.len() > PARAM_BLOCK {
                return Err(Error::invariant(format!("`{}` has more than {PARAM_BLOCK} slots", node.name)));
            }
            for slot in &node.slots {
                slot.validate()?;
            }
        }
        Ok(())
    }

    /// All tunable slots in canonical order.
    pub fn slots(&self) -> impl Iterator<Item = &ParamSlot> + '_ {
        self.nodes.iter().flat_map(|n| n.slots.iter())
    }

    /// `(node name, slot)` pairs in canonical order.
    pub fn labeled_slots(&self) -> impl Iterator<Item = (&str, &ParamSlot)> + '_ {
        self.nodes
            .iter()
            .flat_map(|n| n.slots.iter().map(move |s| (n.name.as_str(), s)))
    }

    pub fn param_count(&self) -> usize {
        self.nodes.iter().map(|n| n.slots.len()).sum()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Offset of `node.slot` in the parameter vector.
    pub fn slot_index(&self, node: &str, slot: &str) -> Option<usize> {
        let mut offset = 0;
        for n in &self.nodes {
            if n.name == node {
                return n.slots.iter().position(|s| s.name == slot).map(|i| offset + i);
            }
            offset += n.slots.len();
        }
        None
    }

    pub fn fixed_value(&self, node: &str) -> Option<f64> {
        self.nodes.iter().find(|n| n.name == node).and_then(|n| n.fixed_value)
    }

    /// Parameter vector at the middle grid point of every slot.
    pub fn mid_grid(&self) -> ParamVector {
        ParamVector(self.slots().map(ParamSlot::midpoint).collect())
    }

    pub fn lower_bounds(&self) -> ParamVector {
        ParamVector(self.slots().map(|s| s.lower).collect())
    }

    /// Maps parameters into the unit cube (per-slot min-max).
    pub fn to_unit(&self, params: &ParamVector) -> Vec<f64> {
        self.slots().zip(&params.0).map(|(s, &v)| s.normalize(v)).collect()
    }

    /// Inverse of [`CircuitGraph::to_unit`], snapped to the grid.
    pub fn from_unit(&self, unit: &[f64]) -> ParamVector {
        let raw = ParamVector(
            self.slots()
                .zip(unit)
                .map(|(s, &u)| s.lower + u * (s.upper - s.lower))
                .collect(),
        );
        clamp_to_grid(&raw, self)
    }

    pub fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::invariant(format!(
                "parameter vector has {} entries, circuit `{}` has {} slots",
                params.len(),
                self.name,
                self.param_count()
            )));
        }
        for ((node, slot), &v) in self.labeled_slots().zip(&params.0) {
            if slot.index_of(v).is_none() {
                return Err(Error::invariant(format!(
                    "{node}.{} = {v} is off-grid or outside [{}, {}]",
                    slot.name, slot.lower, slot.upper
                )));
            }
        }
        Ok(())
    }
}

/// The tunable device parameters in device units, one per slot in canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Clamps every value into its slot bounds and snaps it to the slot grid.
pub fn clamp_to_grid(raw: &ParamVector, graph: &CircuitGraph) -> ParamVector {
    ParamVector(graph.slots().zip(&raw.0).map(|(s, &v)| s.clamp_to_grid(v)).collect())
}

/// One row per node: 3-bit kind code followed by the normalized parameter block.
pub fn encode_node_features(graph: &CircuitGraph, params: &ParamVector) -> Result<Vec<[f64; NODE_FEATURE_DIM]>> {
    graph.check_params(params)?;
    let mut rows = Vec::with_capacity(graph.nodes.len());
    let mut offset = 0;
    for node in &graph.nodes {
        let mut row = [0.0; NODE_FEATURE_DIM];
        row[..KIND_BITS].copy_from_slice(&node.kind.bits());
        for (i, slot) in node.slots.iter().enumerate() {
            row[KIND_BITS + i] = slot.normalize(params.0[offset + i]);
        }
        offset += node.slots.len();
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessSpeed {
    Typical,
    Fast,
    Slow,
}

impl ProcessSpeed {
    fn letter(self) -> char {
        match self {
            ProcessSpeed::Typical => 'T',
            ProcessSpeed::Fast => 'F',
            ProcessSpeed::Slow => 'S',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvtCorner {
    pub process_n: ProcessSpeed,
    pub process_p: ProcessSpeed,
    pub vdd: f64,
    pub temperature_c: f64,
}

pub const NOMINAL_VDD: f64 = 1.2;
pub const NOMINAL_TEMP_C: f64 = 25.0;

impl PvtCorner {
    pub fn nominal() -> Self {
        Self {
            process_n: ProcessSpeed::Typical,
            process_p: ProcessSpeed::Typical,
            vdd: NOMINAL_VDD,
            temperature_c: NOMINAL_TEMP_C,
        }
    }

    pub fn temperature_k(&self) -> f64 {
        self.temperature_c + 273.15
    }
}

impl fmt::Display for PvtCorner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}/{:.2}V/{}C",
            self.process_n.letter(),
            self.process_p.letter(),
            self.vdd,
            self.temperature_c
        )
    }
}

/// Cartesian product `process x vdd x temperature`, process outermost.
pub fn corner_grid(process: &[(ProcessSpeed, ProcessSpeed)], vdd: &[f64], temperature_c: &[f64]) -> Vec<PvtCorner> {
    let mut out = Vec::with_capacity(process.len() * vdd.len() * temperature_c.len());
    for &(n, p) in process {
        for &v in vdd {
            for &t in temperature_c {
                out.push(PvtCorner {
                    process_n: n,
                    process_p: p,
                    vdd: v,
                    temperature_c: t,
                });
            }
        }
    }
    out
}

/// The 16 extreme corners: {SS, SF, FS, FF} x {1.1, 1.3} V x {-40, 125} C.
pub fn extreme_corners() -> Vec<PvtCorner> {
    use ProcessSpeed::{Fast, Slow};
    corner_grid(&[(Slow, Slow), (Slow, Fast), (Fast, Slow), (Fast, Fast)], &[1.1, 1.3], &[-40.0, 125.0])
}

/// Circuit specification kinds bound by design goals, in spec-matrix row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    Gain,
    Bandwidth,
    PhaseMargin,
    Current,
}

impl SpecKind {
    pub const ALL: [SpecKind; 4] = [SpecKind::Gain, SpecKind::Bandwidth, SpecKind::PhaseMargin, SpecKind::Current];

    pub fn label(self) -> &'static str {
        match self {
            SpecKind::Gain => "gain_db",
            SpecKind::Bandwidth => "bandwidth_hz",
            SpecKind::PhaseMargin => "phase_margin_deg",
            SpecKind::Current => "current_a",
        }
    }

    /// Specs spanning decades are observed on a log10 scale.
    pub fn log_scaled(self) -> bool {
        matches!(self, SpecKind::Bandwidth | SpecKind::Current)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AtLeast,
    AtMost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GoalSampling {
    Uniform { min: f64, max: f64 },
    LogUniform { min: f64, max: f64 },
    /// Only a bound is given; targets are drawn from `[bound, bound + span]`.
    Bound { bound: f64, span: f64 },
}

impl GoalSampling {
    /// Effective `(min, max)` of the sampled target.
    pub fn range(&self) -> (f64, f64) {
        match *self {
            GoalSampling::Uniform { min, max } | GoalSampling::LogUniform { min, max } => (min, max),
            GoalSampling::Bound { bound, span } => (bound, bound + span),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRange {
    pub kind: SpecKind,
    pub direction: Direction,
    pub sampling: GoalSampling,
}

/// Goal sampling space, one entry per spec in [`SpecKind::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSpace {
    pub entries: Vec<GoalRange>,
}

/// Extra headroom above a bound-only goal (phase margin) from which targets are drawn.
pub const BOUND_GOAL_SPAN: f64 = 10.0;

impl GoalSpace {
    pub fn standard(gain_db: (f64, f64), current_a: (f64, f64), pm_min_deg: f64, bw_hz: (f64, f64)) -> Self {
        Self {
            entries: vec![
                GoalRange {
                    kind: SpecKind::Gain,
                    direction: Direction::AtLeast,
                    sampling: GoalSampling::Uniform {
                        min: gain_db.0,
                        max: gain_db.1,
                    },
                },
                GoalRange {
                    kind: SpecKind::Bandwidth,
                    direction: Direction::AtLeast,
                    sampling: GoalSampling::Uniform {
                        min: bw_hz.0,
                        max: bw_hz.1,
                    },
                },
                GoalRange {
                    kind: SpecKind::PhaseMargin,
                    direction: Direction::AtLeast,
                    sampling: GoalSampling::Bound {
                        bound: pm_min_deg,
                        span: BOUND_GOAL_SPAN,
                    },
                },
                GoalRange {
                    kind: SpecKind::Current,
                    direction: Direction::AtMost,
                    sampling: GoalSampling::LogUniform {
                        min: current_a.0,
                        max: current_a.1,
                    },
                },
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, kind: SpecKind) -> Option<&GoalRange> {
        self.entries.iter().find(|e| e.kind == kind)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            let (lo, hi) = e.sampling.range();
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::invariant(format!("degenerate goal range for {}", e.kind.label())));
            }
            if let GoalSampling::LogUniform { min, .. } = e.sampling {
                if min <= 0.0 {
                    return Err(Error::invariant(format!("log-uniform range for {} must be positive", e.kind.label())));
                }
            }
        }
        Ok(())
    }
}
