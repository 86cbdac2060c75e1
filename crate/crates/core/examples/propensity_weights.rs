//! Fits the study-membership model on one simulated hybrid dataset and
//! summarizes the propensities and historical weights per source.
//!
//!     cargo run --example propensity_weights -- [scenario]

use hybridssr::io::table::{weights_summary_table, OutputFormat};
use hybridssr::propensity::{compute_weights, fit_propensity, FitOptions, Propensities};
use hybridssr::rng::ReplicationStreams;
use hybridssr::sim::scenario::{generate_scenario_data, TRUE_GAMMA};
use hybridssr::{AllocationRatio, Scenario};

fn main() -> hybridssr::Result<()> {
    let id: u8 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let scenario = Scenario::preset(id)?;
    let streams = ReplicationStreams::new(7, id, 0);
    let (current, historical) = generate_scenario_data(&scenario, AllocationRatio::TWO_TO_ONE, 300, &streams)?;
    let data = current.concat(&historical)?;

    let model = fit_propensity(&data, &FitOptions::default())?;
    println!(
        "{} ({} current, {} historical)",
        scenario.label,
        data.n_current(),
        data.n_historical()
    );
    println!(
        "converged={} iterations={} |score|={:.2e}",
        model.converged, model.iterations, model.final_gradient_norm
    );
    println!("gamma   fitted    generating (scenario 1)");
    let names = ["1", "x1", "x2", "x3", "x4"];
    for (j, g) in model.gamma.iter().enumerate() {
        println!("{:<6} {:>8.4}  {:>8.4}", names[j], g, TRUE_GAMMA[j]);
    }

    let w = compute_weights(&data, Propensities::Model(&model))?;
    println!("\nP(R=1) = {:.4}\n", w.p_r1);
    weights_summary_table(&data, &w).write(OutputFormat::Markdown, std::io::stdout())
}
