use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::tape::{Adjacency, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Slope of the leaky rectifier applied to attention logits.
pub const ATTENTION_SLOPE: f64 = 0.2;

/// Random matrix with orthonormal rows or columns (whichever is fewer), times `gain`.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Tensor {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let g = DMatrix::<f64>::from_fn(tall, short, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Tensor::from_fn(rows, cols, |i, j| gain * if rows >= cols { q[(i, j)] } else { q[(j, i)] })
}

/// Cursor over the tape leaves of a module's tensors, in declaration order.
pub struct Leaves<'a> {
    vars: &'a [Var],
    next: usize,
}

impl<'a> Leaves<'a> {
    pub fn new(vars: &'a [Var]) -> Self {
        Self { vars, next: 0 }
    }

    fn take(&mut self) -> Var {
        let v = self.vars[self.next];
        self.next += 1;
        v
    }
}

/// Fully connected layer `x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, gain: f64, rng: &mut R) -> Self {
        Self {
            w: orthogonal(input, output, gain, rng),
            b: Tensor::zeros(1, output),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 2] {
        [&self.w, &self.b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.w, &mut self.b]
    }

    pub fn forward(&self, tape: &mut Tape, leaves: &mut Leaves, x: Var) -> Var {
        let w = leaves.take();
        let b = leaves.take();
        let xw = tape.matmul(x, w);
        tape.add_row(xw, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatHead {
    pub w: Tensor,
    /// Attention weights on the receiving node, `head_dim x 1`.
    pub a_src: Tensor,
    /// Attention weights on the neighbour, `head_dim x 1`.
    pub a_dst: Tensor,
}

/// Multi-head graph attention layer with concatenated heads and ELU output.
#[derive(Debug, Clone, PartialEq)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
}

impl GatLayer {
    pub fn init<R: Rng + ?Sized>(input: usize, heads: usize, head_dim: usize, rng: &mut R) -> Self {
        let heads = (0..heads)
            .map(|_| {
                let a = orthogonal(2 * head_dim, 1, 1.0, rng);
                GatHead {
                    w: orthogonal(input, head_dim, 1.0, rng),
                    a_src: Tensor::new(head_dim, 1, a.data()[..head_dim].to_vec()).expect("sized"),
                    a_dst: Tensor::new(head_dim, 1, a.data()[head_dim..].to_vec()).expect("sized"),
                }
            })
            .collect();
        Self { heads }
    }

    pub fn input_dim(&self) -> usize {
        self.heads[0].w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.heads.iter().map(|h| h.w.cols()).sum()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.heads.iter().flat_map(|h| [&h.w, &h.a_src, &h.a_dst]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.heads
            .iter_mut()
            .flat_map(|h| [&mut h.w, &mut h.a_src, &mut h.a_dst])
            .collect()
    }

    pub fn forward(&self, tape: &mut Tape, leaves: &mut Leaves, x: Var, adj: &Arc<Adjacency>) -> Var {
        let mut outs = Vec::with_capacity(self.heads.len());
        for _ in &self.heads {
            let w = leaves.take();
            let a_src = leaves.take();
            let a_dst = leaves.take();
            let wh = tape.matmul(x, w);
            let s = tape.matmul(wh, a_src);
            let d = tape.matmul(wh, a_dst);
            let agg = tape.attention(wh, s, d, Arc::clone(adj), ATTENTION_SLOPE);
            outs.push(tape.elu(agg));
        }
        tape.concat_cols(&outs)
    }
}

/// Applies one GAT layer to node features (`n x in_dim`) on an undirected edge list.
pub fn gat_forward(layer: &GatLayer, features: &Tensor, edges: &[(usize, usize)]) -> Result<Tensor> {
    let n = features.rows();
    if n == 0 {
        return Err(Error::invariant("graph attention over an empty graph"));
    }
    if features.cols() != layer.input_dim() {
        return Err(Error::config(format!(
            "node features have {} columns, layer expects {}",
            features.cols(),
            layer.input_dim()
        )));
    }
    if let Some(&(a, b)) = edges.iter().find(|(a, b)| *a >= n || *b >= n) {
        return Err(Error::invariant(format!("edge ({a}, {b}) out of range for {n} nodes")));
    }
    let adj = Arc::new(Adjacency::new(n, edges));
    let mut tape = Tape::new();
    let vars: Vec<Var> = layer.tensors().into_iter().map(|t| tape.leaf(t.clone())).collect();
    let x = tape.leaf(features.clone());
    let out = layer.forward(&mut tape, &mut Leaves::new(&vars), x, &adj);
    Ok(tape.value(out).clone())
}
