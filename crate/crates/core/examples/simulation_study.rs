//! Monte Carlo operating characteristics for the five preset scenarios,
//! under the null and under a 3.5-point effect.
//!
//!     cargo run --release --example simulation_study -- [reps] [seed]
//!
//! Set HYBRIDSSR_THREADS to pin the worker count; results do not depend
//! on it.

use hybridssr::io::table::{metrics_table, OutputFormat};
use hybridssr::sim::{run_study_sim, Scenario, SimConfig};

fn main() -> hybridssr::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2024);

    for (title, effect, ids) in [("Type I error", 0.0, 1..=5), ("Power", 3.5, 1..=4)] {
        let scenarios = ids
            .map(|id| Scenario::preset(id).map(|s| s.with_effect(effect)))
            .collect::<hybridssr::Result<Vec<_>>>()?;
        let metrics = run_study_sim(&SimConfig::new(scenarios, reps, seed))?;
        println!("## {title} (%), {reps} replications\n");
        metrics_table(&metrics).write(OutputFormat::Markdown, std::io::stdout())?;
        println!();
    }
    Ok(())
}
