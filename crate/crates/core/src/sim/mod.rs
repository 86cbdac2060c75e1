//! Monte Carlo study of the trial lifecycle: plan from historical data,
//! re-estimate at an interim look, complete enrollment, borrow controls and
//! test. Rejection rates and mean sizes are aggregated per scenario.

pub mod scenario;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{ipw_test_with, sample_historical_controls, t_test_unadjusted, IpwOptions};
use crate::model::{AllocationRatio, Dataset, DesignParams, Moments};
use crate::propensity::{compute_weights, fit_propensity, FitOptions, Propensities, PropensityModel, WeightSet};
use crate::rng::{Purpose, ReplicationStreams};
use crate::ssr::{initial_sample_size, ssr_strategy1, ssr_strategy2};

pub use scenario::{generate_historical, generate_scenario_data, Enrollment, PropensityMode, Scenario, SourceParams};

/// Environment variable capping the worker count; `0` means one worker per
/// available core.
pub const THREADS_ENV: &str = "HYBRIDSSR_THREADS";

/// Which variances feed strategy 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlanningVariance {
    /// Residual (error) variances of the two sources.
    #[default]
    Error,
    /// Marginal control outcome variances of the two sources.
    Marginal,
    /// `sigma1_sq` and `sigma0_sq` from the design parameters.
    Design,
}

/// The five analyses compared in every replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AnalysisArm {
    Strategy1,
    Strategy2,
    NoSsr,
    NoAd1,
    NoAd2,
}

impl AnalysisArm {
    pub const ALL: [AnalysisArm; 5] = [
        AnalysisArm::Strategy1,
        AnalysisArm::Strategy2,
        AnalysisArm::NoSsr,
        AnalysisArm::NoAd1,
        AnalysisArm::NoAd2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            AnalysisArm::Strategy1 => "strategy1",
            AnalysisArm::Strategy2 => "strategy2",
            AnalysisArm::NoSsr => "no_ssr",
            AnalysisArm::NoAd1 => "no_ad1",
            AnalysisArm::NoAd2 => "no_ad2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub design: DesignParams,
    pub scenarios: Vec<Scenario>,
    pub reps: u64,
    pub seed: u64,
    /// Share of the initially planned current-study size enrolled at the
    /// interim look.
    pub interim_fraction: f64,
    pub planning: PlanningVariance,
    /// Hajek-normalize the control mean in the IPW test.
    pub normalize_control: bool,
    /// Worker count; `None` reads [`THREADS_ENV`].
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(scenarios: Vec<Scenario>, reps: u64, seed: u64) -> Self {
        Self {
            design: DesignParams::default(),
            scenarios,
            reps,
            seed,
            interim_fraction: 0.5,
            planning: PlanningVariance::Error,
            normalize_control: false,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if self.scenarios.is_empty() {
            return Err(Error::Config("no scenarios".into()));
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        if self.reps < 1 || self.reps > crate::rng::MAX_REPLICATION {
            return Err(Error::Config(format!("reps {} out of range", self.reps)));
        }
        if !(self.interim_fraction > 0.0 && self.interim_fraction < 1.0) {
            return Err(Error::Config(format!(
                "interim_fraction {} not in (0,1)",
                self.interim_fraction
            )));
        }
        Ok(())
    }
}

/// Per-replication options shared by all replications of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationOptions {
    pub interim_fraction: f64,
    pub planning: PlanningVariance,
    pub normalize_control: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub seed_index: u64,
    /// Per-group size planned from the historical SD.
    pub initial_n: usize,
    /// Per-group sizes after re-estimation and the enrolled floor.
    pub ssr1_n: usize,
    pub ssr2_n: usize,
    /// Indexed by [`AnalysisArm::index`].
    pub reject: [bool; 5],
    /// Analyses that hit a numerical error; they count as non-rejections.
    pub failed: [bool; 5],
    /// Re-estimations that failed and fell back to the initial size.
    pub ssr_failed: [bool; 2],
    /// The control shortfall exceeded the historical pool at some size.
    pub truncated: bool,
}

/// Current-study size for `n` treated subjects under `ratio`.
pub fn current_size(n: usize, ratio: AllocationRatio) -> usize {
    let (t, c) = (ratio.treated as usize, ratio.control as usize);
    n + (n * c).div_ceil(t)
}

/// Smallest per-group size whose current-study size covers `enrolled`.
pub fn enrolled_floor(enrolled: usize, ratio: AllocationRatio) -> usize {
    let (t, c) = (ratio.treated as usize, ratio.control as usize);
    let mut n = (enrolled * t / (t + c)).max(1);
    while n > 1 && current_size(n - 1, ratio) >= enrolled {
        n -= 1;
    }
    while current_size(n, ratio) < enrolled {
        n += 1;
    }
    n
}

fn weights_for(data: &Dataset, mode: &PropensityMode) -> Result<WeightSet> {
    match mode {
        PropensityMode::Fit => {
            let model = fit_propensity(data, &FitOptions::default())?;
            compute_weights(data, Propensities::Model(&model))
        }
        PropensityMode::Fixed(g) => {
            let model = PropensityModel::from_coefficients(g.clone());
            compute_weights(data, Propensities::Model(&model))
        }
    }
}

fn strategy2_design(design: &DesignParams, scenario: &Scenario, planning: PlanningVariance) -> DesignParams {
    let mut d = *design;
    match planning {
        PlanningVariance::Error => {
            d.sigma1_sq = scenario.current.error_var;
            d.sigma0_sq = scenario.historical.error_var;
        }
        PlanningVariance::Marginal => {
            let mut beta = scenario.beta;
            beta[1] = 0.0;
            d.sigma1_sq = scenario.current.outcome_variance(&beta);
            d.sigma0_sq = scenario.historical.outcome_variance(&beta);
        }
        PlanningVariance::Design => {}
    }
    d
}

/// One simulated trial run through every analysis arm.
pub fn run_replication(
    scenario: &Scenario,
    design: &DesignParams,
    opts: &ReplicationOptions,
    streams: &ReplicationStreams,
) -> Result<ReplicationOutcome> {
    let ratio = design.alloc_ratio;
    let historical = generate_historical(scenario, &mut streams.get(Purpose::Historical));
    let hist_y: Vec<f64> = historical.records.iter().filter_map(|r| r.y).collect();
    let sd = Moments::of(&hist_y)
        .and_then(|m| m.sd)
        .ok_or_else(|| Error::InvalidParameter("historical cohort too small".into()))?;
    let initial_n = initial_sample_size(design, sd)?;

    let mut enrollment = Enrollment::new(scenario, ratio, streams);
    let enrolled = ((opts.interim_fraction * current_size(initial_n, ratio) as f64).floor() as usize).max(1);
    let floor = enrolled_floor(enrolled, ratio);
    let interim = enrollment.first(enrolled).masked_arms().concat(&historical)?;

    let d2 = strategy2_design(design, scenario, opts.planning);
    let (mut ssr1_n, mut ssr2_n) = (initial_n, initial_n);
    let mut ssr_failed = [true; 2];
    if let Ok(w) = weights_for(&interim, &scenario.propensity) {
        if let Ok(r) = ssr_strategy1(&interim, &w, design) {
            ssr1_n = r.floored(floor);
            ssr_failed[0] = false;
        }
        if let Ok(r) = ssr_strategy2(&interim, &w, &d2) {
            ssr2_n = r.floored(floor);
            ssr_failed[1] = false;
        }
    }

    let mut reject = [false; 5];
    let mut failed = [false; 5];
    let mut truncated = false;
    let ipw = IpwOptions {
        normalize_control: opts.normalize_control,
    };
    let plan = [
        (
            ssr1_n,
            Purpose::Sampling1,
            AnalysisArm::Strategy1,
            Some(AnalysisArm::NoAd1),
        ),
        (
            ssr2_n,
            Purpose::Sampling2,
            AnalysisArm::Strategy2,
            Some(AnalysisArm::NoAd2),
        ),
        (initial_n, Purpose::SamplingInitial, AnalysisArm::NoSsr, None),
    ];
    for (n, purpose, ipw_arm, t_arm) in plan {
        let current = enrollment.first(current_size(n, ratio));
        let treated = current
            .records
            .iter()
            .filter(|r| r.arm == crate::model::Arm::Treated)
            .count();
        let controls = current.len() - treated;
        let mut shortfall = treated.saturating_sub(controls);
        if shortfall > historical.len() {
            shortfall = historical.len();
            truncated = true;
        }
        let borrowed = sample_historical_controls(&historical, shortfall, &mut streams.get(purpose))?;
        let final_set = current.concat(&borrowed)?;

        match weights_for(&final_set, &scenario.propensity).and_then(|w| ipw_test_with(&final_set, &w, design, ipw)) {
            Ok(t) => reject[ipw_arm.index()] = t.reject,
            Err(_) => failed[ipw_arm.index()] = true,
        }
        if let Some(arm) = t_arm {
            match t_test_unadjusted(&final_set, design) {
                Ok(t) => reject[arm.index()] = t.reject,
                Err(_) => failed[arm.index()] = true,
            }
        }
    }

    Ok(ReplicationOutcome {
        seed_index: streams.rep,
        initial_n,
        ssr1_n,
        ssr2_n,
        reject,
        failed,
        ssr_failed,
        truncated,
    })
}

/// Operating characteristics of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scenario_id: u8,
    pub label: String,
    pub treatment_effect: f64,
    pub reps: u64,
    /// Rejection rates x100, indexed by [`AnalysisArm::index`].
    pub rate: [f64; 5],
    /// Binomial Monte Carlo standard errors of `rate`, also x100.
    pub rate_se: [f64; 5],
    pub mean_initial_n: f64,
    pub mean_ssr1_n: f64,
    pub mean_ssr2_n: f64,
    /// Monte Carlo standard errors of the three size means.
    pub size_se: [f64; 3],
    pub truncations: u64,
    /// Analyses that failed numerically, summed over arms.
    pub failures: u64,
    pub ssr_fallbacks: u64,
}

impl MetricsRow {
    pub fn rate_of(&self, arm: AnalysisArm) -> f64 {
        self.rate[arm.index()]
    }

    fn aggregate(scenario: &Scenario, outcomes: &[ReplicationOutcome]) -> MetricsRow {
        let r = outcomes.len() as f64;
        let mut rate = [0.0; 5];
        let mut rate_se = [0.0; 5];
        for arm in AnalysisArm::ALL {
            let i = arm.index();
            let hits = outcomes.iter().filter(|o| o.reject[i]).count() as f64;
            let p = hits / r;
            rate[i] = 100.0 * p;
            rate_se[i] = 100.0 * (p * (1.0 - p) / r).sqrt();
        }
        let sizes = |f: fn(&ReplicationOutcome) -> usize| {
            let v: Vec<f64> = outcomes.iter().map(|o| f(o) as f64).collect();
            let m = Moments::of(&v).expect("at least one replication");
            (m.mean, m.sd.map_or(0.0, |sd| sd / r.sqrt()))
        };
        let (mi, si) = sizes(|o| o.initial_n);
        let (m1, s1) = sizes(|o| o.ssr1_n);
        let (m2, s2) = sizes(|o| o.ssr2_n);
        MetricsRow {
            scenario_id: scenario.id,
            label: scenario.label.clone(),
            treatment_effect: scenario.treatment_effect(),
            reps: outcomes.len() as u64,
            rate,
            rate_se,
            mean_initial_n: mi,
            mean_ssr1_n: m1,
            mean_ssr2_n: m2,
            size_se: [si, s1, s2],
            truncations: outcomes.iter().filter(|o| o.truncated).count() as u64,
            failures: outcomes
                .iter()
                .map(|o| o.failed.iter().filter(|&&f| f).count() as u64)
                .sum(),
            ssr_fallbacks: outcomes
                .iter()
                .map(|o| o.ssr_failed.iter().filter(|&&f| f).count() as u64)
                .sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub seed: u64,
    pub interim_fraction: f64,
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn row(&self, scenario_id: u8, treatment_effect: f64) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.scenario_id == scenario_id && r.treatment_effect == treatment_effect)
    }
}

/// Worker count from an explicit value or [`THREADS_ENV`]; `0` or unset
/// means one per core.
pub fn worker_count(explicit: Option<usize>) -> Result<usize> {
    let requested = match explicit {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{THREADS_ENV}={v} is not a count")))?,
            _ => 0,
        },
    };
    Ok(if requested == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        requested
    })
}

/// Runs every scenario for `config.reps` replications.
///
/// Replication `i` of scenario `s` depends only on `(seed, s.id, i)`, and
/// outcomes are reduced in index order, so the table does not depend on
/// the worker count.
pub fn run_study_sim(config: &SimConfig) -> Result<MetricsTable> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(config.threads)?)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let opts = ReplicationOptions {
        interim_fraction: config.interim_fraction,
        planning: config.planning,
        normalize_control: config.normalize_control,
    };
    let mut rows = Vec::with_capacity(config.scenarios.len());
    for scenario in &config.scenarios {
        let outcomes: Vec<ReplicationOutcome> = pool.install(|| {
            (0..config.reps)
                .into_par_iter()
                .map(|i| {
                    let streams = ReplicationStreams::new(config.seed, scenario.id, i);
                    run_replication(scenario, &config.design, &opts, &streams)
                })
                .collect::<Result<_>>()
        })?;
        rows.push(MetricsRow::aggregate(scenario, &outcomes));
    }
    Ok(MetricsTable {
        seed: config.seed,
        interim_fraction: config.interim_fraction,
        rows,
    })
}
