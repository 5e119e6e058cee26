//! Trains on one benchmark and reports evaluation success.
//!
//! Usage: `train [benchmark] [seed] [budget] [random]`

use std::time::Instant;

use ampsizer::bo::{run_vanguard, BoConfig};
use ampsizer::deploy::deploy;
use ampsizer::nn::CheckpointMeta;
use ampsizer::reward::{sample_goal, RewardConfig};
use ampsizer::rl::{train, SizingContext, TrainConfig};
use ampsizer::sim::Simulator;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ampsizer::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let bench = args.get(1).map_or("two_stage", String::as_str);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let budget: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let random = args.get(4).is_some_and(|s| s == "random");
    let sim = Simulator::for_benchmark(bench)?;
    let reward = RewardConfig::default();
    let t = Instant::now();
    let start = if random {
        sim.graph().mid_grid()
    } else {
        run_vanguard(&sim, &reward, &BoConfig::default(), seed)?.0
    };
    let ctx = SizingContext::new(sim, reward)?;
    // Optional overrides as JSON, e.g. TRAIN_CFG='{"learning_rate": 1e-3}'.
    let mut cfg: TrainConfig = match std::env::var("TRAIN_CFG") {
        Ok(s) => serde_json::from_str(&s)?,
        Err(_) => TrainConfig::default(),
    };
    cfg.total_env_evals = budget;
    let out = train(&ctx, &start, &cfg, seed)?;
    for (i, r) in out.trace.iter().enumerate() {
        if i % 10 == 0 {
            println!(
                "batch {:>4} evals {:>6} reward {:>8.3} success {:.2} actor {:>7.4} value {:>8.4} entropy {:.3}",
                r.batch, r.env_evals, r.mean_episode_reward, r.success_rate, r.actor_loss, r.value_loss, r.entropy
            );
        }
    }
    for e in &out.evaluations {
        println!("eval @{:>6}: success {:.2} steps {:.1}", e.env_evals, e.success_rate, e.mean_steps);
    }
    let meta = CheckpointMeta {
        benchmark: bench.to_string(),
        normalization: ctx.normalizer.clone(),
        dims: ctx.policy_dims(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let goals: Vec<_> = (0..200).map(|_| sample_goal(&ctx.benchmark().goal_space, &mut rng)).collect();
    let (results, m) = deploy(&ctx, (&out.best_policy, &meta), &goals, &start, cfg.max_steps)?;
    let mut stuck = 0;
    let mut cycles = 0;
    for r in results.iter().filter(|r| !r.success) {
        let t = &r.trajectory;
        if t.len() > 2 && t[t.len() - 1].params == t[t.len() - 2].params {
            stuck += 1;
        } else if t.len() > 3 && t[t.len() - 1].params == t[t.len() - 3].params {
            cycles += 1;
        }
    }
    println!("failures: {} stuck, {} two-cycles", stuck, cycles);
    for r in results.iter().filter(|r| !r.success).take(3) {
        let rw: Vec<String> = r.trajectory.iter().map(|s| format!("{:.2}", s.reward)).collect();
        println!("{}", rw.join(" "));
        let distinct: std::collections::BTreeSet<String> = r.trajectory.iter().map(|s| format!("{:?}", s.params.0)).collect();
        println!("distinct states {}", distinct.len());
        let last = r.trajectory.last().unwrap();
        let mut worst = [0.0f64; 4];
        for c in &last.spec.columns {
            let m = ampsizer::reward::corner_margins(c, &r.goal);
            for i in 0..4 {
                worst[i] = worst[i].min(m[i]);
            }
        }
        println!("goal {:?} worst margins {:?}", r.goal.values, worst);
        println!("start {:?}\nfinal {:?}", r.trajectory[0].params.0, last.params.0);
    }
    println!(
        "deploy: success {:.3} steps {:.2} t_sim {:.2e} fom {:.1} | train {} evals + {} eval sims, {:.1} s",
        m.n_success,
        m.n_step,
        m.t_sim,
        m.fom_deploy,
        out.env_evals,
        out.eval_sims,
        t.elapsed().as_secs_f64()
    );
    Ok(())
}
