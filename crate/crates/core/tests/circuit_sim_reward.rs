use ampsizer::circuit::{build_benchmark, clamp_to_grid, encode_node_features, BenchmarkId, CircuitGraph, ParamVector, SpecKind};
use ampsizer::nn::apply_action;
use ampsizer::reward::{
    episode_return, fom_opamp, is_success, midpoint_goal, normalized_margin, sample_goal, step_reward, DesignGoal,
    RewardConfig, N_SPECS,
};
use ampsizer::circuit::Direction;
use ampsizer::sim::{corner_modifiers, ParasiticModel, SpecMatrix, Simulator};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_params(graph: &CircuitGraph, rng: &mut impl Rng) -> ParamVector {
    let u: Vec<f64> = (0..graph.param_count()).map(|_| rng.random()).collect();
    graph.from_unit(&u)
}

fn two_stage() -> Simulator {
    Simulator::for_benchmark("two_stage").unwrap()
}

#[test]
fn node_feature_examples() {
    let b = build_benchmark("two_stage").unwrap();
    let g = &b.graph;
    let mut p = g.mid_grid();
    let w = g.slot_index("mn1", "w").unwrap();
    let f = g.slot_index("mn1", "f").unwrap();
    p.0[w] = 1000.0;
    p.0[f] = 16.0;
    let rows = encode_node_features(g, &p).unwrap();
    let mn1 = g.node_index("mn1").unwrap();
    assert_eq!(rows[mn1], [0.0, 0.0, 1.0, 0.0, 1.0]);
    let cl = g.node_index("cl").unwrap();
    assert_eq!(rows[cl], [1.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(g.nodes[mn1].slots[0].normalize(50_500.0), 0.5);
    assert_eq!(rows.len(), g.nodes.len());
}

#[test]
fn off_grid_vector_is_rejected_by_encoder() {
    let b = build_benchmark("two_stage").unwrap();
    let mut p = b.graph.mid_grid();
    p.0[0] += 1.0;
    assert!(encode_node_features(&b.graph, &p).is_err());
}

#[test]
fn mobility_at_fast_cold_corner() {
    let sim = two_stage();
    let c = sim
        .corners()
        .iter()
        .find(|c| c.to_string().starts_with("FF") && c.vdd == 1.3 && c.temperature_c == -40.0)
        .expect("FF/1.3/-40 corner");
    let m = corner_modifiers(c);
    let expected = 1.10 * (233.15f64 / 300.0).powf(-1.5);
    assert!((m.mobility_scale_n - expected).abs() < 1e-12, "{} vs {expected}", m.mobility_scale_n);
}

#[test]
fn spec_matrix_shape_and_purity() {
    let sim = two_stage();
    let p = sim.graph().mid_grid();
    let a = sim.evaluate_all_corners(&p).unwrap();
    let b = sim.evaluate_all_corners(&p).unwrap();
    assert_eq!(a.shape(), (4, 16));
    assert_eq!(a, b);
    assert_eq!(a, sim.evaluate_all_corners_par(&p).unwrap());
}

#[test]
fn corners_do_not_collapse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for id in BenchmarkId::ALL {
        let sim = Simulator::for_benchmark(id.name()).unwrap();
        for _ in 0..5 {
            let s = sim.evaluate_all_corners(&random_params(sim.graph(), &mut rng)).unwrap();
            for i in 0..16 {
                for j in i + 1..16 {
                    assert_ne!(s.columns[i], s.columns[j], "{id}: corners {i} and {j}");
                }
            }
        }
    }
}

#[test]
fn compensation_cap_and_tail_width_probes() {
    let sim = two_stage();
    let g = sim.graph();
    let cc = g.slot_index("c", "c").unwrap();
    let tail = g.slot_index("mn2", "w").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let p = random_params(g, &mut rng);
        let base = sim.evaluate_all_corners(&p).unwrap();
        let step = g.slots().nth(cc).unwrap().step;
        if p.0[cc] + step <= g.slots().nth(cc).unwrap().upper {
            let mut q = p.clone();
            q.0[cc] = g.slots().nth(cc).unwrap().clamp_to_grid(p.0[cc] + step);
            let up = sim.evaluate_all_corners(&q).unwrap();
            for (a, b) in base.columns.iter().zip(&up.columns) {
                assert!(b.gbw_hz < a.gbw_hz);
            }
        }
        let slot = g.slots().nth(tail).unwrap();
        if p.0[tail] + slot.step <= slot.upper {
            let mut q = p.clone();
            q.0[tail] = slot.clamp_to_grid(p.0[tail] + slot.step);
            let up = sim.evaluate_all_corners(&q).unwrap();
            for (a, b) in base.columns.iter().zip(&up.columns) {
                assert!(b.power_w > a.power_w);
            }
        }
    }
}

#[test]
fn goal_sampling_ranges_and_determinism() {
    let space = build_benchmark("two_stage").unwrap().goal_space;
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..20_001).map(|_| sample_goal(&space, &mut rng)).collect::<Vec<_>>()
    };
    let goals = draw(3);
    assert_eq!(goals, draw(3));
    let mut currents: Vec<f64> = goals.iter().map(|g| g.get(SpecKind::Current)).collect();
    for g in &goals {
        assert!((10.0..=20.0).contains(&g.get(SpecKind::Gain)));
        assert!((1e-3..=1e-2).contains(&g.get(SpecKind::Current)));
        assert!(g.get(SpecKind::PhaseMargin) >= 60.0);
    }
    currents.sort_by(f64::total_cmp);
    let median = currents[currents.len() / 2];
    let geometric = (1e-3f64 * 1e-2).sqrt();
    assert!((median / geometric - 1.0).abs() < 0.05, "median {median}");
}

#[test]
fn midpoint_goal_examples() {
    let g = midpoint_goal(&build_benchmark("two_stage").unwrap().goal_space);
    assert_eq!(g.get(SpecKind::Gain), 15.0);
    assert_eq!(g.get(SpecKind::Bandwidth), 10.5e6);
}

#[test]
fn reward_spec_examples() {
    assert_eq!(normalized_margin(40.0, 40.0, Direction::AtLeast).unwrap(), 0.0);
    assert!((normalized_margin(36.0, 40.0, Direction::AtLeast).unwrap() + 4.0 / 76.0).abs() < 1e-12);
    assert!((normalized_margin(36.0, 40.0, Direction::AtLeast).unwrap() + 0.05263).abs() < 1e-5);
    assert_eq!(normalized_margin(50.0, 40.0, Direction::AtLeast).unwrap(), 0.0);
    assert!((episode_return(&[-0.1, -0.05, 10.0]) - 9.85).abs() < 1e-12);
    assert_eq!(episode_return(&[]), 0.0);
}

#[test]
fn fom_scaling_and_nmcf_load() {
    let sim = two_stage();
    let s = sim.evaluate_all_corners(&sim.graph().mid_grid()).unwrap().columns[0];
    let mut doubled = s;
    doubled.power_w *= 2.0;
    assert!((fom_opamp(&doubled, 1.0) - fom_opamp(&s, 1.0) / 2.0).abs() < 1e-12 * fom_opamp(&s, 1.0));
    assert_eq!(build_benchmark("nmcf").unwrap().load_capacitance_pf(), 100.0);
}

#[test]
fn success_agrees_with_reward_on_simulated_cases() {
    let cfg = RewardConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut hits = 0;
    for id in BenchmarkId::ALL {
        let sim = Simulator::for_benchmark(id.name()).unwrap();
        for _ in 0..250 {
            let spec = sim.evaluate_all_corners(&random_params(sim.graph(), &mut rng)).unwrap();
            let goal = sample_goal(&sim.benchmark().goal_space, &mut rng);
            let ok = is_success(&spec, &goal);
            hits += usize::from(ok);
            assert_eq!(ok, step_reward(&spec, &goal, &cfg) == cfg.success_bonus);
        }
    }
    assert!(hits < 1000);
}

fn arb_goal() -> impl Strategy<Value = DesignGoal> {
    (prop::array::uniform4(0.01f64..100.0), prop::array::uniform4(any::<bool>())).prop_map(|(values, up)| DesignGoal {
        values,
        directions: up.map(|u| if u { Direction::AtLeast } else { Direction::AtMost }),
    })
}

fn arb_spec(corners: usize) -> impl Strategy<Value = SpecMatrix> {
    let sim = two_stage();
    let template = sim.evaluate_all_corners(&sim.graph().mid_grid()).unwrap().columns[0];
    prop::collection::vec(prop::array::uniform4(0.01f64..100.0), corners).prop_map(move |cols| SpecMatrix {
        columns: cols
            .into_iter()
            .map(|v| {
                let mut s = template;
                for (k, x) in SpecKind::ALL.into_iter().zip(v) {
                    s.set(k, x);
                }
                s
            })
            .collect(),
    })
}

proptest! {
    #[test]
    fn clamp_is_idempotent_and_on_grid(seed in any::<u64>(), scale in 0.0f64..3.0) {
        let b = build_benchmark("nmcf").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = ParamVector(b.graph.slots().map(|s| s.upper * scale * rng.random::<f64>()).collect());
        let once = clamp_to_grid(&raw, &b.graph);
        prop_assert_eq!(clamp_to_grid(&once, &b.graph), once.clone());
        prop_assert!(b.graph.check_params(&once).is_ok());
    }

    #[test]
    fn encoding_is_injective(seed in any::<u64>()) {
        let b = build_benchmark("two_stage").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_params(&b.graph, &mut rng);
        let q = random_params(&b.graph, &mut rng);
        let (ep, eq) = (encode_node_features(&b.graph, &p).unwrap(), encode_node_features(&b.graph, &q).unwrap());
        prop_assert_eq!(p == q, ep == eq);
    }

    #[test]
    fn actions_stay_on_grid(seed in any::<u64>(), acts in prop::collection::vec(0usize..3, 13)) {
        let b = build_benchmark("two_stage").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_params(&b.graph, &mut rng);
        let next = apply_action(&p, &acts, &b.graph);
        prop_assert!(b.graph.check_params(&next).is_ok());
    }

    #[test]
    fn parasitics_never_improve(seed in any::<u64>(), beta in 0.0f64..0.15, scale in 0.0f64..2.0) {
        let sim = two_stage();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_params(sim.graph(), &mut rng);
        let model = ParasiticModel { load_scale: scale, ..ParasiticModel::uniform(beta) };
        for pre in sim.evaluate_all_corners(&p).unwrap().columns {
            let post = model.apply(sim.graph(), &p, &pre);
            prop_assert!(post.gain_db <= pre.gain_db);
            prop_assert!(post.bandwidth_hz <= pre.bandwidth_hz);
            prop_assert!(post.phase_margin_deg <= pre.phase_margin_deg);
            prop_assert!(post.current_a >= pre.current_a);
            prop_assert!(post.power_w >= pre.power_w);
        }
    }

    #[test]
    fn reward_range_and_success(spec in arb_spec(16), goal in arb_goal()) {
        let cfg = RewardConfig::default();
        let r = step_reward(&spec, &goal, &cfg);
        prop_assert!(r == cfg.success_bonus || (r > -(N_SPECS as f64) && r <= 0.0), "{}", r);
        prop_assert_eq!(is_success(&spec, &goal), r == cfg.success_bonus);
    }

    #[test]
    fn reward_ignores_corner_order(spec in arb_spec(16), goal in arb_goal(), seed in any::<u64>()) {
        let cfg = RewardConfig::default();
        let mut shuffled = spec.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..16).rev() {
            shuffled.columns.swap(i, rng.random_range(0..=i));
        }
        let (a, b) = (step_reward(&spec, &goal, &cfg), step_reward(&shuffled, &goal, &cfg));
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn margin_is_scale_invariant(s in 0.01f64..100.0, g in 0.01f64..100.0, c in 0.01f64..100.0, up in any::<bool>()) {
        let d = if up { Direction::AtLeast } else { Direction::AtMost };
        let a = normalized_margin(s, g, d).unwrap();
        let b = normalized_margin(c * s, c * g, d).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a > -1.0 && a <= 0.0);
    }
}
