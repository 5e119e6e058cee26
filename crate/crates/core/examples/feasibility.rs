//! Prints, for every built-in benchmark, the fraction of sampled goals that
//! some point of a random on-grid pool meets under all corners.

use ampsizer::circuit::BenchmarkId;
use ampsizer::sim::{probe, Simulator};

fn main() -> ampsizer::Result<()> {
    let pool: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    for id in BenchmarkId::ALL {
        let sim = Simulator::for_benchmark(id.name())?;
        let frac = probe::feasible_fraction(&sim, 200, pool, 7);
        println!("{id:<15} feasible {:.3}", frac);
    }
    Ok(())
}
