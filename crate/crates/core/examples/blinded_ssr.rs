//! Blinded re-estimation at a 50% interim look. Arm labels are removed
//! before either strategy sees the data, and strategy 2 also runs with the
//! outcomes removed.
//!
//!     cargo run --example blinded_ssr -- [scenario]

use hybridssr::io::table::{ssr_table, OutputFormat};
use hybridssr::propensity::{compute_weights, fit_propensity, FitOptions, Propensities};
use hybridssr::rng::ReplicationStreams;
use hybridssr::sim::current_size;
use hybridssr::sim::scenario::generate_scenario_data;
use hybridssr::ssr::{initial_sample_size, ssr_strategy1, ssr_strategy2};
use hybridssr::{DesignParams, Scenario};

fn main() -> hybridssr::Result<()> {
    let id: u8 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let scenario = Scenario::preset(id)?;
    let design = DesignParams {
        sigma1_sq: scenario.current.error_var,
        sigma0_sq: scenario.historical.error_var,
        ..Default::default()
    };
    let n = initial_sample_size(&design, design.sigma0_sq.sqrt())?;
    let enrolled = current_size(n, design.alloc_ratio) / 2;
    let streams = ReplicationStreams::new(11, id, 0);
    let (current, historical) = generate_scenario_data(&scenario, design.alloc_ratio, enrolled, &streams)?;
    let interim = current.masked_arms().concat(&historical)?;

    let model = fit_propensity(&interim, &FitOptions::default())?;
    let w = compute_weights(&interim, Propensities::Model(&model))?;
    let s1 = ssr_strategy1(&interim, &w, &design)?;
    let s2 = ssr_strategy2(&interim.without_outcomes(), &w, &design)?;

    println!(
        "{}: initial n = {n}, enrolled at interim = {enrolled}\n",
        scenario.label
    );
    ssr_table(&[s1, s2]).write(OutputFormat::Markdown, std::io::stdout())
}
