//! Compares figure-of-merit optimization methods at one budget.
//!
//! Usage: `pareto [benchmark] [budget] [seeds]`

use std::time::Instant;

use ampsizer::bo::BoConfig;
use ampsizer::pareto::{pareto_optimize, ParetoMethod};
use ampsizer::reward::RewardConfig;
use ampsizer::rl::{SizingContext, TrainConfig};
use ampsizer::sim::Simulator;

fn main() -> ampsizer::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let bench = args.get(1).map_or("two_stage", String::as_str);
    let budget: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seeds: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(3);
    let methods: Vec<ParetoMethod> = match args.get(4) {
        Some(m) => m.split(',').map(str::parse).collect::<ampsizer::Result<_>>()?,
        None => vec![ParetoMethod::Rl, ParetoMethod::Random],
    };
    let ctx = SizingContext::new(Simulator::for_benchmark(bench)?, RewardConfig::default())?;
    for m in methods {
        for seed in 0..seeds {
            let t = Instant::now();
            let out = pareto_optimize(&ctx, budget, m, &TrainConfig::default(), &BoConfig::default(), seed)?;
            println!(
                "{:<6} seed {seed}: best fom {:>10.3} frontier {:>3} evals {} ({:.1} s)",
                m.name(),
                out.best_fom,
                out.frontier.len(),
                out.evaluations,
                t.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
