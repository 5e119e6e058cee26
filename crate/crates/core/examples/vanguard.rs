//! Runs the BO vanguard on every benchmark and prints the incumbent.

use std::time::Instant;

use ampsizer::bo::{run_vanguard, BoConfig};
use ampsizer::circuit::BenchmarkId;
use ampsizer::reward::RewardConfig;
use ampsizer::sim::Simulator;

fn main() -> ampsizer::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    for id in BenchmarkId::ALL {
        let sim = Simulator::for_benchmark(id.name())?;
        for seed in 0..seeds {
            let t = Instant::now();
            let (_, state) = run_vanguard(&sim, &RewardConfig::default(), &BoConfig::default(), seed)?;
            println!(
                "{:<15} seed {seed}: best {:>8.4} after {:>2} evals ({} ms)",
                id.name(),
                state.best_reward().unwrap_or(f64::NAN),
                state.evaluations(),
                t.elapsed().as_millis()
            );
        }
    }
    Ok(())
}
