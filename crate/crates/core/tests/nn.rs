use std::sync::Arc;

use ampsizer::circuit::build_benchmark;
use ampsizer::nn::checkpoint::{checkpoint_from_str, checkpoint_to_string};
use ampsizer::nn::dist::{action_probabilities, sample_action, softmax};
use ampsizer::nn::gradcheck::{grad_check, grad_check_coords};
use ampsizer::nn::layers::GatHead;
use ampsizer::nn::{
    gat_forward, ActorCritic, Adjacency, CheckpointMeta, GatLayer, InputBuilder, ObsNormalizer, PolicyDims,
    PolicyInput, Tape, Tensor, Var,
};
use ampsizer::reward::{sample_goal, N_SPECS};
use ampsizer::sim::Simulator;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Gradient check of `sum(seed .* build(inputs))` over all input coordinates.
fn check_op(shapes: &[[usize; 2]], seed: u64, build: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point: Vec<f64> = shapes.iter().flat_map(|s| random_tensor(&mut rng, s[0], s[1]).into_data()).collect();
    let run = |x: &[f64]| {
        let mut tape = Tape::new();
        let mut off = 0;
        let vars: Vec<Var> = shapes
            .iter()
            .map(|s| {
                let n = s[0] * s[1];
                let v = tape.leaf(Tensor::new(s[0], s[1], x[off..off + n].to_vec()).unwrap());
                off += n;
                v
            })
            .collect();
        let out = build(&mut tape, &vars);
        let value = tape.value(out);
        let mut srng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let w = random_tensor(&mut srng, value.rows(), value.cols());
        let f: f64 = value.data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
        let grads = tape.backward(out, w);
        let g: Vec<f64> = vars
            .iter()
            .zip(shapes)
            .flat_map(|(v, s)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(s[0], s[1])).into_data())
            .collect();
        (f, g)
    };
    grad_check(run, &point, 1e-5).max_rel_error
}

#[test]
fn elementary_op_gradients() {
    let tol = 1e-4;
    assert!(check_op(&[[3, 4], [4, 2]], 1, |t, v| t.matmul(v[0], v[1])) < tol);
    assert!(check_op(&[[3, 4], [3, 4]], 2, |t, v| t.add(v[0], v[1])) < tol);
    assert!(check_op(&[[3, 4], [1, 4]], 3, |t, v| t.add_row(v[0], v[1])) < tol);
    assert!(check_op(&[[5, 3]], 4, |t, v| t.relu(v[0])) < tol);
    assert!(check_op(&[[5, 3]], 5, |t, v| t.elu(v[0])) < tol);
    assert!(check_op(&[[2, 3], [2, 1]], 6, |t, v| t.concat_cols(&[v[0], v[1], v[0]])) < tol);
    assert!(check_op(&[[6, 3]], 7, |t, v| t.block_mean(v[0], 3)) < tol);
}

#[test]
fn attention_gradient() {
    let adj = Arc::new(Adjacency::new(5, &[(0, 1), (1, 2), (2, 3), (1, 4)]).batched(2));
    let err = check_op(&[[10, 3], [10, 1], [10, 1]], 8, |t, v| t.attention(v[0], v[1], v[2], Arc::clone(&adj), 0.2));
    assert!(err < 1e-4, "{err}");
}

#[test]
fn gat_layer_and_linear_gradients() {
    let adj = Arc::new(Adjacency::new(4, &[(0, 1), (1, 2), (2, 3)]));
    // one head: features 4x5, W 5x8, a_src 8x1, a_dst 8x1; then a linear layer
    let err = check_op(&[[4, 5], [5, 8], [8, 1], [8, 1], [8, 3], [1, 3]], 9, |t, v| {
        let wh = t.matmul(v[0], v[1]);
        let s = t.matmul(wh, v[2]);
        let d = t.matmul(wh, v[3]);
        let a = t.attention(wh, s, d, Arc::clone(&adj), 0.2);
        let h = t.elu(a);
        let z = t.matmul(h, v[4]);
        t.add_row(z, v[5])
    });
    assert!(err < 1e-4, "{err}");
}

fn policy_fixture(seed: u64, batch: usize) -> (ActorCritic, PolicyInput) {
    let sim = Simulator::for_benchmark("two_stage").unwrap();
    let b = sim.benchmark();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = PolicyDims::for_benchmark(b);
    let mut policy = ActorCritic::new(dims, &mut rng);
    // larger head weights so the actor gradient is not vanishingly small
    for v in policy.actor.trunk[1].w.data_mut() {
        *v *= 100.0;
    }
    let norm = ObsNormalizer::from_goal_space(&b.goal_space).unwrap();
    let builder = InputBuilder::new(b);
    let samples: Vec<(ampsizer::circuit::ParamVector, Vec<f64>)> = (0..batch)
        .map(|_| {
            let unit: Vec<f64> = (0..b.graph.param_count()).map(|_| rng.random()).collect();
            let x = b.graph.from_unit(&unit);
            let goal = sample_goal(&b.goal_space, &mut rng);
            let obs = norm.observe(&goal, &sim.evaluate_all_corners(&x).unwrap());
            (x, obs)
        })
        .collect();
    let refs: Vec<(&ampsizer::circuit::ParamVector, &[f64])> = samples.iter().map(|(x, o)| (x, o.as_slice())).collect();
    (policy, builder.build(b, &refs).unwrap())
}

fn tower_check(actor: bool) -> f64 {
    let (policy, input) = policy_fixture(21, 3);
    let n_actor: usize = policy.actor.named_tensors().iter().map(|(_, t)| t.data().len()).sum();
    let total = policy.parameter_count();
    let range = if actor { 0..n_actor } else { n_actor..total };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut coords: Vec<usize> = range.collect();
    coords.shuffle(&mut rng);
    coords.truncate(400);
    let outputs = if actor { 3 * policy.dims.n_params } else { 1 };
    let w = random_tensor(&mut rng, 3, outputs);
    let f = |x: &[f64]| {
        let mut p = policy.clone();
        p.set_flat(x);
        let tower = if actor { &p.actor } else { &p.critic };
        let (out, grads) = tower.value_and_grad(&input, |_| w.clone());
        let val: f64 = out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
        let mut g = vec![0.0; total];
        let off = if actor { 0 } else { n_actor };
        let flat: Vec<f64> = grads.into_iter().flat_map(Tensor::into_data).collect();
        g[off..off + flat.len()].copy_from_slice(&flat);
        (val, g)
    };
    grad_check_coords(f, &policy.flat(), 1e-5, &coords).max_rel_error
}

#[test]
fn actor_tower_gradient() {
    let e = tower_check(true);
    assert!(e < 1e-4, "{e}");
}

#[test]
fn critic_tower_gradient() {
    let e = tower_check(false);
    assert!(e < 1e-4, "{e}");
}

#[test]
fn policy_shapes_and_probabilities() {
    let (policy, input) = policy_fixture(3, 4);
    assert_eq!(policy.dims.obs_dim, 68);
    let logits = policy.logits(&input).unwrap();
    let values = policy.values(&input).unwrap();
    assert_eq!(logits.shape(), [4, 3 * policy.dims.n_params]);
    assert_eq!(values.shape(), [4, 1]);
    assert!(logits.is_finite() && values.is_finite());
    for r in 0..4 {
        for p in action_probabilities(logits.row(r)) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(p.iter().all(|v| *v > 0.0));
        }
    }
}

#[test]
fn batched_equals_single_forward() {
    let (policy, input) = policy_fixture(4, 3);
    let all = policy.logits(&input).unwrap();
    let n = input.nodes_per_graph;
    let single = PolicyInput {
        nodes: Tensor::from_fn(n, input.nodes.cols(), |i, j| input.nodes.get(n + i, j)),
        adjacency: Arc::new(Adjacency::new(n, &build_benchmark("two_stage").unwrap().graph.edges)),
        nodes_per_graph: n,
        obs: Tensor::row_vector(input.obs.row(1).to_vec()),
    };
    assert_eq!(policy.logits(&single).unwrap().row(0), all.row(1));
}

#[test]
fn dimension_mismatch_is_config_error() {
    let (policy, mut input) = policy_fixture(4, 1);
    input.obs = Tensor::zeros(1, 10);
    assert!(matches!(policy.logits(&input), Err(ampsizer::Error::Config(_))));
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.35) {
                edges.push((a, b));
            }
        }
    }
    edges
}

#[test]
fn gat_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let n = rng.random_range(1..=10);
        let layer = GatLayer::init(5, 4, 8, &mut rng);
        let x = random_tensor(&mut rng, n, 5);
        let edges = random_graph(&mut rng, n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        // node i moves to position perm[i]
        let mut px = Tensor::zeros(n, 5);
        for i in 0..n {
            px.row_mut(perm[i]).copy_from_slice(x.row(i));
        }
        let pe: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let out = gat_forward(&layer, &x, &edges).unwrap();
        let pout = gat_forward(&layer, &px, &pe).unwrap();
        for i in 0..n {
            assert_eq!(out.row(i), pout.row(perm[i]));
        }
    }
}

#[test]
fn two_node_gat_matches_hand_computation() {
    let layer = GatLayer {
        heads: vec![GatHead {
            w: Tensor::new(2, 2, vec![1.0, 0.5, -0.5, 2.0]).unwrap(),
            a_src: Tensor::new(2, 1, vec![0.3, -0.2]).unwrap(),
            a_dst: Tensor::new(2, 1, vec![0.1, 0.4]).unwrap(),
        }],
    };
    let x = Tensor::new(2, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap();
    let out = gat_forward(&layer, &x, &[(0, 1)]).unwrap();
    // Wh0 = (1 - 1, 0.5 + 4) = (0, 4.5); Wh1 = (-1 - 0.25, -0.5 + 1) = (-1.25, 0.5)
    let wh = [[0.0, 4.5], [-1.25, 0.5]];
    let src = |i: usize| 0.3 * wh[i][0] - 0.2 * wh[i][1];
    let dst = |j: usize| 0.1 * wh[j][0] + 0.4 * wh[j][1];
    let lrelu = |v: f64| if v > 0.0 { v } else { 0.2 * v };
    let elu = |v: f64| if v > 0.0 { v } else { v.exp() - 1.0 };
    for i in 0..2 {
        let e: Vec<f64> = (0..2).map(|j| lrelu(src(i) + dst(j))).collect();
        let z = e[0].exp() + e[1].exp();
        for c in 0..2 {
            let v = (e[0].exp() * wh[0][c] + e[1].exp() * wh[1][c]) / z;
            assert!((out.get(i, c) - elu(v)).abs() < 1e-10);
        }
    }
}

#[test]
fn sampling_frequencies_match_softmax() {
    let logits = [0.3, -0.2, 1.1, -1.0, 0.0, 0.4];
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut counts = [[0usize; 3]; 2];
    let n = 100_000;
    for _ in 0..n {
        let a = sample_action(&logits, &mut rng);
        counts[0][a.actions[0]] += 1;
        counts[1][a.actions[1]] += 1;
    }
    for r in 0..2 {
        let p = softmax(&logits[3 * r..3 * r + 3]);
        for k in 0..3 {
            assert!((counts[r][k] as f64 / n as f64 - p[k]).abs() < 0.01);
        }
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let (policy, input) = policy_fixture(8, 2);
    let b = build_benchmark("two_stage").unwrap();
    let meta = CheckpointMeta {
        benchmark: "two_stage".into(),
        normalization: ObsNormalizer::from_goal_space(&b.goal_space).unwrap(),
        dims: policy.dims,
    };
    let text = checkpoint_to_string(&policy, &meta).unwrap();
    let (loaded, lmeta) = checkpoint_from_str(&text, Some("two_stage")).unwrap();
    assert_eq!(lmeta, meta);
    assert_eq!(loaded, policy);
    assert_eq!(checkpoint_to_string(&loaded, &lmeta).unwrap(), text);
    assert_eq!(loaded.logits(&input).unwrap(), policy.logits(&input).unwrap());
    assert!(checkpoint_from_str(&text, Some("nmcf")).is_err());
    let bumped = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
    assert!(checkpoint_from_str(&bumped, None).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    ampsizer::nn::save_checkpoint(&path, &policy, &meta).unwrap();
    assert_eq!(ampsizer::nn::load_checkpoint(&path, None).unwrap().0, policy);
    assert_eq!(N_SPECS, 4);
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(l in prop::array::uniform3(-50.0f64..50.0)) {
        let p = softmax(&l);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|v| *v > 0.0));
    }
}
