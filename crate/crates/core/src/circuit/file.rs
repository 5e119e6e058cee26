//! Custom circuit definitions in TOML.
//!
//! ```toml
//! name = "my_two_stage"
//! model = "two_stage"          # behavioral model the node names bind to
//! edges = [["mp1", "mn1"]]      # top-level keys must precede the [[nodes]] tables
//!
//! [[nodes]]
//! name = "mp1"
//! kind = "PMOS"
//! slots = [
//!   { name = "w", unit = "nm", lower = 1000.0, upper = 100000.0, step = 1000.0 },
//!   { name = "f", unit = "fingers", lower = 1.0, upper = 16.0, step = 1.0 },
//! ]
//!
//! [corners]
//! process = [["slow", "slow"], ["fast", "fast"]]
//! vdd = [1.1, 1.3]
//! temperature = [-40.0, 125.0]
//!
//! [[goals]]
//! spec = "gain"
//! direction = "at_least"
//! min = 10.0
//! max = 20.0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::benchmarks::Benchmark;
use super::{
    corner_grid, BenchmarkId, CircuitGraph, DeviceKind, DeviceNode, Direction, GoalRange, GoalSampling, GoalSpace,
    ParamSlot, ProcessSpeed, SpecKind,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitFile {
    pub name: String,
    #[serde(default)]
    pub model: Option<String>,
    pub nodes: Vec<NodeDef>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
    pub corners: CornerDef,
    pub goals: Vec<GoalDef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDef {
    pub name: String,
    pub kind: String,
    #[serde(default)]
    pub code: Option<u8>,
    #[serde(default)]
    pub slots: Vec<ParamSlot>,
    #[serde(default)]
    pub fixed_value: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornerDef {
    pub process: Vec<(ProcessSpeed, ProcessSpeed)>,
    pub vdd: Vec<f64>,
    pub temperature: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalDef {
    pub spec: SpecKind,
    pub direction: Direction,
    #[serde(default)]
    pub min: Option<f64>,
    #[serde(default)]
    pub max: Option<f64>,
    #[serde(default)]
    pub bound: Option<f64>,
    #[serde(default)]
    pub log_uniform: bool,
}

impl CircuitFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn into_benchmark(self) -> Result<Benchmark> {
        let model = self.model.as_deref().unwrap_or(&self.name);
        let id: BenchmarkId = model.parse()?;

        let nodes = self
            .nodes
            .into_iter()
            .map(|n| {
                let code = match (n.code, n.kind.to_ascii_uppercase().as_str()) {
                    (Some(c), _) => c,
                    (None, "NMOS") => 1,
                    (None, "PMOS") => 2,
                    (None, "CAP") => 3,
                    (None, "LOAD") => 4,
                    (None, other) => return Err(Error::config(format!("node `{}`: kind `{other}` needs an explicit code", n.name))),
                };
                Ok(DeviceNode {
                    name: n.name,
                    kind: DeviceKind::new(code, n.kind),
                    slots: n.slots,
                    fixed_value: n.fixed_value,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let index = |name: &str| {
            nodes
                .iter()
                .position(|n| n.name == name)
                .ok_or_else(|| Error::config(format!("edge references unknown node `{name}`")))
        };
        let edges = self
            .edges
            .iter()
            .map(|(a, b)| Ok((index(a)?, index(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let graph = CircuitGraph::new(&self.name, nodes, edges)?;

        let corners = corner_grid(&self.corners.process, &self.corners.vdd, &self.corners.temperature);
        if corners.is_empty() {
            return Err(Error::config("corner set is empty"));
        }

        let mut entries = Vec::new();
        for kind in SpecKind::ALL {
            let g = self
                .goals
                .iter()
                .find(|g| g.spec == kind)
                .ok_or_else(|| Error::config(format!("missing goal for `{}`", kind.label())))?;
            let sampling = match (g.min, g.max, g.bound) {
                (Some(min), Some(max), None) if g.log_uniform => GoalSampling::LogUniform { min, max },
                (Some(min), Some(max), None) => GoalSampling::Uniform { min, max },
                (None, None, Some(bound)) => GoalSampling::Bound {
                    bound,
                    span: super::BOUND_GOAL_SPAN,
                },
                _ => {
                    return Err(Error::config(format!(
                        "goal `{}` needs either min/max or bound",
                        kind.label()
                    )))
                }
            };
            entries.push(GoalRange {
                kind,
                direction: g.direction,
                sampling,
            });
        }
        let goal_space = GoalSpace { entries };
        goal_space.validate()?;

        Ok(Benchmark {
            id,
            graph,
            corners,
            goal_space,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
name = "tiny"
model = "two_stage"
edges = [["mn1", "cl"]]

[[nodes]]
name = "mn1"
kind = "NMOS"
slots = [
  { name = "w", unit = "nm", lower = 1000.0, upper = 5000.0, step = 1000.0 },
  { name = "f", unit = "fingers", lower = 1.0, upper = 4.0, step = 1.0 },
]

[[nodes]]
name = "cl"
kind = "LOAD"
fixed_value = 1.0

[corners]
process = [["slow", "slow"], ["fast", "fast"]]
vdd = [1.1, 1.3]
temperature = [-40.0, 125.0]

[[goals]]
spec = "gain"
direction = "at_least"
min = 10.0
max = 20.0

[[goals]]
spec = "bandwidth"
direction = "at_least"
min = 1e6
max = 2e7

[[goals]]
spec = "phase_margin"
direction = "at_least"
bound = 60.0

[[goals]]
spec = "current"
direction = "at_most"
min = 1e-3
max = 1e-2
log_uniform = true
"#;

    #[test]
    fn parses_sample_definition() {
        let b = CircuitFile::parse(SAMPLE).unwrap().into_benchmark().unwrap();
        assert_eq!(b.id, BenchmarkId::TwoStage);
        assert_eq!(b.graph.nodes.len(), 2);
        assert_eq!(b.graph.edges, vec![(0, 1)]);
        assert_eq!(b.corners.len(), 8);
        assert!(matches!(
            b.goal_space.entry(SpecKind::Current).unwrap().sampling,
            GoalSampling::LogUniform { .. }
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = SAMPLE.replace("name = \"tiny\"", "name = \"tiny\"\ncolour = \"red\"");
        assert!(matches!(CircuitFile::parse(&text), Err(Error::Config(_))));
    }

    #[test]
    fn edge_to_missing_node_is_rejected() {
        let text = SAMPLE.replace("[\"mn1\", \"cl\"]", "[\"mn1\", \"mp9\"]");
        let err = CircuitFile::parse(&text).unwrap().into_benchmark().unwrap_err();
        assert!(err.to_string().contains("mp9"));
    }
}
