//! Reverse-mode differentiation over [`Tensor`] values.

use std::sync::Arc;

use super::tensor::{sorted_sum, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Neighbour lists of a graph with self-loops, possibly a disjoint union of copies.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    neighbors: Vec<Vec<usize>>,
}

impl Adjacency {
    /// Undirected adjacency of `n` nodes; every node also neighbours itself.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut neighbors: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(a, b) in edges {
            if a != b {
                if !neighbors[a].contains(&b) {
                    neighbors[a].push(b);
                }
                if !neighbors[b].contains(&a) {
                    neighbors[b].push(a);
                }
            }
        }
        Self { neighbors }
    }

    /// `copies` disjoint copies of `self`, node blocks laid out consecutively.
    pub fn batched(&self, copies: usize) -> Self {
        let n = self.len();
        let mut neighbors = Vec::with_capacity(n * copies);
        for c in 0..copies {
            for list in &self.neighbors {
                neighbors.push(list.iter().map(|j| j + c * n).collect());
            }
        }
        Self { neighbors }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Relu(Var),
    Elu(Var),
    ConcatCols(Vec<Var>),
    /// Mean over consecutive blocks of `group` rows.
    BlockMean(Var, usize),
    Attention {
        wh: Var,
        src: Var,
        dst: Var,
        adj: Arc<Adjacency>,
        slope: f64,
        /// Attention weights per node, aligned with its neighbour list.
        alpha: Vec<Vec<f64>>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records operations for one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "bias must be a row vector");
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            for (x, y) in v.row_mut(i).iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(v, Op::Elu(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let t = self.value(*p);
            assert_eq!(t.rows(), rows, "concat row mismatch");
            for i in 0..rows {
                out.row_mut(i)[off..off + t.cols()].copy_from_slice(t.row(i));
            }
            off += t.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Order-independent mean over consecutive blocks of `group` rows.
    pub fn block_mean(&mut self, a: Var, group: usize) -> Var {
        let t = self.value(a);
        assert!(group > 0 && t.rows() % group == 0, "rows not divisible into blocks");
        let blocks = t.rows() / group;
        let mut terms = vec![0.0; group];
        let out = Tensor::from_fn(blocks, t.cols(), |b, j| {
            for (k, term) in terms.iter_mut().enumerate() {
                *term = t.get(b * group + k, j);
            }
            sorted_sum(&mut terms) / group as f64
        });
        self.push(out, Op::BlockMean(a, group))
    }

    /// Graph attention aggregation. With `wh` the projected node features and
    /// `src`/`dst` the per-node attention scores (`n x 1`), node `i` outputs
    /// `sum_j alpha_ij wh_j` over its neighbours, where `alpha_i` is the softmax
    /// of `leaky(src_i + dst_j)`.
    pub fn attention(&mut self, wh: Var, src: Var, dst: Var, adj: Arc<Adjacency>, slope: f64) -> Var {
        let h = self.value(wh);
        let s = self.value(src);
        let d = self.value(dst);
        let n = h.rows();
        assert_eq!(adj.len(), n, "adjacency size mismatch");
        assert_eq!(s.shape(), [n, 1]);
        assert_eq!(d.shape(), [n, 1]);
        let mut out = Tensor::zeros(n, h.cols());
        let mut alpha = Vec::with_capacity(n);
        for i in 0..n {
            let nb = adj.neighbors(i);
            let e: Vec<f64> = nb.iter().map(|&j| leaky(s.get(i, 0) + d.get(j, 0), slope)).collect();
            let m = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let p: Vec<f64> = e.iter().map(|v| (v - m).exp()).collect();
            let mut buf = p.clone();
            let z = sorted_sum(&mut buf);
            let a: Vec<f64> = p.iter().map(|v| v / z).collect();
            let mut terms = vec![0.0; nb.len()];
            for c in 0..h.cols() {
                for (k, &j) in nb.iter().enumerate() {
                    terms[k] = a[k] * h.get(j, c);
                }
                out.set(i, c, sorted_sum(&mut terms));
            }
            alpha.push(a);
        }
        self.push(
            out,
            Op::Attention {
                wh,
                src,
                dst,
                adj,
                slope,
                alpha,
            },
        )
    }

    /// Gradients of `sum(seed .* out)` with respect to every recorded value.
    pub fn backward(&self, out: Var, seed: Tensor) -> Gradients {
        assert_eq!(seed.shape(), self.value(out).shape(), "seed shape mismatch");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        let acc = |grads: &mut Vec<Option<Tensor>>, v: Var, g: Tensor| match &mut grads[v.0] {
            Some(t) => t.add_assign(&g),
            slot => *slot = Some(g),
        };
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (x, y) in gb.data_mut().iter_mut().zip(g.row(i)) {
                            *x += y;
                        }
                    }
                    acc(&mut grads, *bias, gb);
                    acc(&mut grads, *a, g.clone());
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let mut ga = g.clone();
                    for (gv, xv) in ga.data_mut().iter_mut().zip(x.data()) {
                        if *xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Elu(a) => {
                    let x = self.value(*a);
                    let mut ga = g.clone();
                    for (gv, xv) in ga.data_mut().iter_mut().zip(x.data()) {
                        if *xv <= 0.0 {
                            *gv *= xv.exp();
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let cols = self.value(*p).cols();
                        let gp = Tensor::from_fn(g.rows(), cols, |i, j| g.get(i, off + j));
                        acc(&mut grads, *p, gp);
                        off += cols;
                    }
                }
                Op::BlockMean(a, group) => {
                    let x = self.value(*a);
                    let ga = Tensor::from_fn(x.rows(), x.cols(), |i, j| g.get(i / group, j) / *group as f64);
                    acc(&mut grads, *a, ga);
                }
                Op::Attention {
                    wh,
                    src,
                    dst,
                    adj,
                    slope,
                    alpha,
                } => {
                    let h = self.value(*wh);
                    let s = self.value(*src);
                    let d = self.value(*dst);
                    let n = h.rows();
                    let mut gh = Tensor::zeros(n, h.cols());
                    let mut gs = Tensor::zeros(n, 1);
                    let mut gd = Tensor::zeros(n, 1);
                    for i in 0..n {
                        let nb = adj.neighbors(i);
                        let a = &alpha[i];
                        let gi = g.row(i);
                        // d out_i / d alpha_ij = wh_j
                        let da: Vec<f64> = nb.iter().map(|&j| gi.iter().zip(h.row(j)).map(|(x, y)| x * y).sum()).collect();
                        let mean: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
                        for (k, &j) in nb.iter().enumerate() {
                            for (ghj, gic) in gh.row_mut(j).iter_mut().zip(gi) {
                                *ghj += a[k] * gic;
                            }
                            let de = a[k] * (da[k] - mean) * leaky_grad(s.get(i, 0) + d.get(j, 0), *slope);
                            gs.data_mut()[i] += de;
                            gd.data_mut()[j] += de;
                        }
                    }
                    acc(&mut grads, *wh, gh);
                    acc(&mut grads, *src, gs);
                    acc(&mut grads, *dst, gd);
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a recorded value, `None` when it does not influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
}
