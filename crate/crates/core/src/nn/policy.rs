use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dist::N_ACTIONS;
use super::layers::{GatLayer, Leaves, Linear};
use super::tape::{Adjacency, Tape, Var};
use super::tensor::Tensor;
use crate::circuit::{encode_node_features, Benchmark, ParamVector, NODE_FEATURE_DIM};
use crate::error::{Error, Result};
use crate::reward::N_SPECS;

/// Initialization gain of the actor's output layer.
pub const ACTOR_HEAD_GAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDims {
    pub node_features: usize,
    pub obs_dim: usize,
    pub n_params: usize,
    pub gat_layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub obs_hidden: usize,
    pub trunk_hidden: usize,
}

impl PolicyDims {
    pub fn for_benchmark(b: &Benchmark) -> Self {
        Self {
            node_features: NODE_FEATURE_DIM,
            obs_dim: N_SPECS * (1 + b.corners.len()),
            n_params: b.graph.param_count(),
            gat_layers: 2,
            heads: 4,
            head_dim: 8,
            obs_hidden: 64,
            trunk_hidden: 64,
        }
    }

    /// Width of the graph embedding: one mean-pooled readout per GAT layer.
    pub fn graph_embedding(&self) -> usize {
        self.gat_layers * self.heads * self.head_dim
    }

    pub fn trunk_input(&self) -> usize {
        self.graph_embedding() + self.obs_hidden
    }
}

/// A batch of observations of one circuit topology.
#[derive(Debug, Clone)]
pub struct PolicyInput {
    /// Node features of every graph, `(batch * nodes) x node_features`.
    pub nodes: Tensor,
    pub adjacency: Arc<Adjacency>,
    pub nodes_per_graph: usize,
    /// `batch x obs_dim`.
    pub obs: Tensor,
}

impl PolicyInput {
    pub fn batch(&self) -> usize {
        self.obs.rows()
    }
}

/// Builds policy inputs for one circuit.
#[derive(Debug, Clone)]
pub struct InputBuilder {
    adjacency: Adjacency,
    nodes: usize,
}

impl InputBuilder {
    pub fn new(b: &Benchmark) -> Self {
        Self {
            adjacency: Adjacency::new(b.graph.nodes.len(), &b.graph.edges),
            nodes: b.graph.nodes.len(),
        }
    }

    pub fn build(&self, b: &Benchmark, samples: &[(&ParamVector, &[f64])]) -> Result<PolicyInput> {
        let batch = samples.len();
        let obs_dim = samples.first().map_or(0, |s| s.1.len());
        let mut nodes = Vec::with_capacity(batch * self.nodes * NODE_FEATURE_DIM);
        let mut obs = Vec::with_capacity(batch * obs_dim);
        for (params, o) in samples {
            for row in encode_node_features(&b.graph, params)? {
                nodes.extend_from_slice(&row);
            }
            if o.len() != obs_dim {
                return Err(Error::config("observation vectors in a batch differ in length"));
            }
            obs.extend_from_slice(o);
        }
        Ok(PolicyInput {
            nodes: Tensor::new(batch * self.nodes, NODE_FEATURE_DIM, nodes)?,
            adjacency: Arc::new(self.adjacency.batched(batch)),
            nodes_per_graph: self.nodes,
            obs: Tensor::new(batch, obs_dim, obs)?,
        })
    }
}

/// GAT branch plus observation branch feeding a two-layer trunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    pub gat: Vec<GatLayer>,
    pub obs: Vec<Linear>,
    pub trunk: Vec<Linear>,
}

impl Tower {
    pub fn init<R: Rng + ?Sized>(dims: &PolicyDims, output: usize, head_gain: f64, rng: &mut R) -> Self {
        let mut gat = Vec::with_capacity(dims.gat_layers);
        let mut input = dims.node_features;
        for _ in 0..dims.gat_layers {
            gat.push(GatLayer::init(input, dims.heads, dims.head_dim, rng));
            input = dims.heads * dims.head_dim;
        }
        let obs = vec![
            Linear::init(dims.obs_dim, dims.obs_hidden, 1.0, rng),
            Linear::init(dims.obs_hidden, dims.obs_hidden, 1.0, rng),
        ];
        let trunk = vec![
            Linear::init(dims.trunk_input(), dims.trunk_hidden, 1.0, rng),
            Linear::init(dims.trunk_hidden, output, head_gain, rng),
        ];
        Self { gat, obs, trunk }
    }

    /// Tensors in forward-pass order, with names relative to the tower.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.gat.iter().enumerate() {
            for (h, head) in layer.heads.iter().enumerate() {
                out.push((format!("gat{l}.head{h}.w"), &head.w));
                out.push((format!("gat{l}.head{h}.a_src"), &head.a_src));
                out.push((format!("gat{l}.head{h}.a_dst"), &head.a_dst));
            }
        }
        for (prefix, layers) in [("obs", &self.obs), ("trunk", &self.trunk)] {
            for (i, lin) in layers.iter().enumerate() {
                out.push((format!("{prefix}{i}.w"), &lin.w));
                out.push((format!("{prefix}{i}.b"), &lin.b));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for layer in &mut self.gat {
            out.extend(layer.tensors_mut());
        }
        for lin in self.obs.iter_mut().chain(self.trunk.iter_mut()) {
            out.extend(lin.tensors_mut());
        }
        out
    }

    fn forward(&self, tape: &mut Tape, leaves: &[Var], input: &PolicyInput) -> Var {
        let mut cursor = Leaves::new(leaves);
        let mut h = tape.leaf(input.nodes.clone());
        let mut pools = Vec::with_capacity(self.gat.len() + 1);
        for layer in &self.gat {
            h = layer.forward(tape, &mut cursor, h, &input.adjacency);
            pools.push(tape.block_mean(h, input.nodes_per_graph));
        }
        let mut o = tape.leaf(input.obs.clone());
        for lin in &self.obs {
            let z = lin.forward(tape, &mut cursor, o);
            o = tape.relu(z);
        }
        pools.push(o);
        let mut z = tape.concat_cols(&pools);
        let (last, hidden) = self.trunk.split_last().expect("trunk has an output layer");
        for lin in hidden {
            let a = lin.forward(tape, &mut cursor, z);
            z = tape.relu(a);
        }
        last.forward(tape, &mut cursor, z)
    }

    /// Output of the tower, `batch x output`.
    pub fn eval(&self, input: &PolicyInput) -> Tensor {
        let mut tape = Tape::new();
        let (out, _) = self.record(&mut tape, input);
        tape.value(out).clone()
    }

    /// Records a forward pass; returns the output and the leaf of every tensor.
    pub fn record(&self, tape: &mut Tape, input: &PolicyInput) -> (Var, Vec<Var>) {
        let leaves: Vec<Var> = self.named_tensors().into_iter().map(|(_, t)| tape.leaf(t.clone())).collect();
        let out = self.forward(tape, &leaves, input);
        (out, leaves)
    }

    /// Output and the gradient of `sum(seed .* output)` w.r.t. every tensor.
    pub fn value_and_grad(&self, input: &PolicyInput, seed: impl FnOnce(&Tensor) -> Tensor) -> (Tensor, Vec<Tensor>) {
        let mut tape = Tape::new();
        let (out, leaves) = self.record(&mut tape, input);
        let value = tape.value(out).clone();
        let mut grads = tape.backward(out, seed(&value));
        let g = leaves
            .iter()
            .zip(self.named_tensors())
            .map(|(v, (_, t))| grads.take(*v).unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
            .collect();
        (value, g)
    }
}

/// Actor and critic with identical trunks and separate weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub dims: PolicyDims,
    pub actor: Tower,
    pub critic: Tower,
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(dims: PolicyDims, rng: &mut R) -> Self {
        let actor = Tower::init(&dims, N_ACTIONS * dims.n_params, ACTOR_HEAD_GAIN, rng);
        let critic = Tower::init(&dims, 1, 1.0, rng);
        Self { dims, actor, critic }
    }

    pub fn check_input(&self, input: &PolicyInput) -> Result<()> {
        if input.nodes.cols() != self.dims.node_features {
            return Err(Error::config(format!(
                "node features have {} columns, policy expects {}",
                input.nodes.cols(),
                self.dims.node_features
            )));
        }
        if input.obs.cols() != self.dims.obs_dim {
            return Err(Error::config(format!(
                "observation has {} entries, policy expects {}",
                input.obs.cols(),
                self.dims.obs_dim
            )));
        }
        if input.nodes.rows() != input.batch() * input.nodes_per_graph || input.adjacency.len() != input.nodes.rows() {
            return Err(Error::config("node batch does not match the observation batch"));
        }
        Ok(())
    }

    /// Action logits, `batch x (3 M)`; row `k` holds `M` consecutive triples.
    pub fn logits(&self, input: &PolicyInput) -> Result<Tensor> {
        self.check_input(input)?;
        Ok(self.actor.eval(input))
    }

    /// State-value estimates, `batch x 1`.
    pub fn values(&self, input: &PolicyInput) -> Result<Tensor> {
        self.check_input(input)?;
        Ok(self.critic.eval(input))
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .actor
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("actor.{n}"), t))
            .collect();
        out.extend(self.critic.named_tensors().into_iter().map(|(n, t)| (format!("critic.{n}"), t)));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.actor.tensors_mut();
        out.extend(self.critic.tensors_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.data().len()).sum()
    }
}

impl ActorCritic {
    /// All weights concatenated in [`ActorCritic::named_tensors`] order.
    pub fn flat(&self) -> Vec<f64> {
        self.named_tensors().into_iter().flat_map(|(_, t)| t.data().to_vec()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.parameter_count(), "flat weight length mismatch");
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.data().len();
            t.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
    }
}
