//! End-to-end hybrid-control workflow on a simulated cohort, going through
//! CSV files the way a real analysis would.
//!
//! 1. Plan the per-group size from an assumed SD of 13.
//! 2. At the interim look, write the blinded data (arms removed) and
//!    re-estimate the size with both strategies.
//! 3. Enroll to the re-estimated size, borrow historical controls to fill
//!    the 2:1 imbalance, and run the IPW test on the final data.
//!
//!     cargo run --example case_study_workflow -- [output dir]

use std::path::PathBuf;

use hybridssr::inference::{ipw_test, sample_historical_controls, t_test_unadjusted};
use hybridssr::io::table::{ssr_table, test_table, OutputFormat};
use hybridssr::propensity::{compute_weights, fit_propensity, FitOptions, Propensities};
use hybridssr::rng::{Purpose, ReplicationStreams};
use hybridssr::sim::scenario::{generate_historical, Enrollment};
use hybridssr::sim::{current_size, enrolled_floor};
use hybridssr::ssr::{initial_sample_size, ssr_strategy1, ssr_strategy2};
use hybridssr::{load_dataset, save_dataset, Arm, Dataset, DesignParams, Scenario};

fn weights(d: &Dataset) -> hybridssr::Result<hybridssr::WeightSet> {
    let model = fit_propensity(d, &FitOptions::default())?;
    compute_weights(d, Propensities::Model(&model))
}

fn main() -> hybridssr::Result<()> {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hybridssr_case_study"));
    std::fs::create_dir_all(&dir)?;

    let design = DesignParams::default();
    let n0 = initial_sample_size(&design, 13.0)?;
    println!("planned per-group size: {n0}");

    let scenario = Scenario::preset(1)?.with_effect(3.5);
    let streams = ReplicationStreams::new(2024, 1, 0);
    let historical = generate_historical(&scenario, &mut streams.get(Purpose::Historical));
    let mut enrollment = Enrollment::new(&scenario, design.alloc_ratio, &streams);

    let enrolled = current_size(n0, design.alloc_ratio) / 2;
    let interim_path = dir.join("interim.csv");
    save_dataset(
        &enrollment.first(enrolled).masked_arms().concat(&historical)?,
        &interim_path,
    )?;
    let interim = load_dataset(&interim_path)?;
    let w = weights(&interim)?;
    let s1 = ssr_strategy1(&interim, &w, &design)?;
    let s2 = ssr_strategy2(&interim, &w, &design)?;
    println!(
        "\ninterim look after {enrolled} current subjects ({})\n",
        interim_path.display()
    );
    ssr_table(&[s1.clone(), s2]).write(OutputFormat::Markdown, std::io::stdout())?;

    let n = s1.floored(enrolled_floor(enrolled, design.alloc_ratio));
    let current = enrollment.first(current_size(n, design.alloc_ratio));
    let treated = current.records.iter().filter(|r| r.arm == Arm::Treated).count();
    let shortfall = (2 * treated).saturating_sub(current.len()).min(historical.len());
    let borrowed = sample_historical_controls(&historical, shortfall, &mut streams.get(Purpose::Sampling1))?;
    let final_path = dir.join("final.csv");
    save_dataset(&current.concat(&borrowed)?, &final_path)?;
    let final_set = load_dataset(&final_path)?;
    println!(
        "\nfinal analysis: n = {n}, {} current + {} borrowed historical controls ({})\n",
        current.len(),
        borrowed.len(),
        final_path.display()
    );

    let ipw = ipw_test(&final_set, &weights(&final_set)?, &design)?;
    let t = t_test_unadjusted(&final_set, &design)?;
    test_table(&[("ipw", ipw), ("t_test", t)]).write(OutputFormat::Markdown, std::io::stdout())
}
