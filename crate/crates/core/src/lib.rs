//! Hybrid-control trial toolkit.
//!
//! A current randomized study is augmented with controls from a historical
//! study. Propensity-score fusion weights reweight the historical subjects
//! towards the current population, the control arm is estimated by inverse
//! probability weighting, and the sample size can be re-estimated at an
//! interim look without unblinding (outcome-based strategy 1, or the
//! outcome-free strategy 2). The [`sim`] module reproduces the operating
//! characteristics of the whole workflow by Monte Carlo.
//!
//! ```
//! use hybridssr::model::DesignParams;
//! use hybridssr::ssr::initial_sample_size;
//!
//! let n = initial_sample_size(&DesignParams::default(), 13.0).unwrap();
//! assert_eq!(n, 217);
//! ```

pub mod cli;
pub mod error;
pub mod inference;
pub mod io;
pub mod model;
pub mod normal;
pub mod propensity;
pub mod rng;
pub mod sim;
pub mod ssr;

pub use error::{Error, Result};
pub use inference::{ipw_test, sample_historical_controls, t_test_unadjusted, TestResult};
pub use io::{load_dataset, save_dataset};
pub use model::{AllocationRatio, Arm, Dataset, DesignParams, Study, SubjectRecord};
pub use propensity::{compute_weights, fit_propensity, Propensities, PropensityModel, WeightSet};
pub use sim::{run_study_sim, MetricsTable, Scenario, SimConfig};
pub use ssr::{initial_sample_size, ssr_strategy1, ssr_strategy2, SsrResult};
