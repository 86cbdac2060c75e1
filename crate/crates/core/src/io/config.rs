//! Flat JSON configuration: one object whose keys are dotted names such as
//! `"design.alpha"` or `"sim.reps"`. Unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{AllocationRatio, DesignParams};
use crate::sim::scenario::TRUE_GAMMA;
use crate::sim::{PlanningVariance, PropensityMode, Scenario, SimConfig};

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "design.alpha")]
    pub alpha: Option<f64>,
    #[serde(rename = "design.power")]
    pub power: Option<f64>,
    #[serde(rename = "design.delta")]
    pub delta: Option<f64>,
    #[serde(rename = "design.tau0")]
    pub tau0: Option<f64>,
    #[serde(rename = "design.sigma1_sq")]
    pub sigma1_sq: Option<f64>,
    #[serde(rename = "design.sigma0_sq")]
    pub sigma0_sq: Option<f64>,
    /// `"treated:control"`, e.g. `"2:1"`.
    #[serde(rename = "design.alloc_ratio")]
    pub alloc_ratio: Option<String>,
    #[serde(rename = "design.one_sided")]
    pub one_sided: Option<bool>,

    /// Preset scenario ids to run.
    #[serde(rename = "scenario.ids")]
    pub scenario_ids: Option<Vec<u8>>,
    #[serde(rename = "scenario.treatment_effect")]
    pub treatment_effect: Option<f64>,
    #[serde(rename = "scenario.mu1_h")]
    pub mu1_h: Option<f64>,
    #[serde(rename = "scenario.p_h")]
    pub p_h: Option<f64>,
    #[serde(rename = "scenario.mu3_h")]
    pub mu3_h: Option<f64>,
    #[serde(rename = "scenario.mu4_h")]
    pub mu4_h: Option<f64>,
    #[serde(rename = "scenario.var1_h")]
    pub var1_h: Option<f64>,
    #[serde(rename = "scenario.var3_h")]
    pub var3_h: Option<f64>,
    #[serde(rename = "scenario.var4_h")]
    pub var4_h: Option<f64>,
    #[serde(rename = "scenario.error_var_h")]
    pub error_var_h: Option<f64>,

    #[serde(rename = "sim.reps")]
    pub reps: Option<u64>,
    #[serde(rename = "sim.seed")]
    pub seed: Option<u64>,
    #[serde(rename = "sim.interim_fraction")]
    pub interim_fraction: Option<f64>,
    #[serde(rename = "sim.n_h")]
    pub n_h: Option<usize>,
    #[serde(rename = "sim.beta5")]
    pub beta5: Option<f64>,
    /// `"fit"` or `"fixed"`.
    #[serde(rename = "sim.propensity_mode")]
    pub propensity_mode: Option<String>,
    /// Coefficients on `(1, x1, x2, x3, x4)` for the fixed mode.
    #[serde(rename = "sim.gamma")]
    pub gamma: Option<Vec<f64>>,
    /// `"error"`, `"marginal"` or `"design"`.
    #[serde(rename = "sim.planning_variance")]
    pub planning_variance: Option<String>,
    #[serde(rename = "sim.normalize_control")]
    pub normalize_control: Option<bool>,
}

/// Default replication count when neither the file nor the caller sets one.
pub const DEFAULT_REPS: u64 = 10_000;

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ConfigFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_alloc_ratio(s: &str) -> Result<AllocationRatio> {
    let bad = || Error::Config(format!("allocation ratio {s:?} is not of the form t:c"));
    let (t, c) = s.split_once(':').ok_or_else(bad)?;
    let ratio = AllocationRatio {
        treated: t.trim().parse().map_err(|_| bad())?,
        control: c.trim().parse().map_err(|_| bad())?,
    };
    if ratio.treated == 0 || ratio.control == 0 {
        return Err(bad());
    }
    Ok(ratio)
}

impl ConfigFile {
    /// Design parameters with defaults for absent keys.
    pub fn design(&self) -> Result<DesignParams> {
        let mut d = DesignParams::default();
        if let Some(v) = self.alpha {
            d.alpha = v;
        }
        if let Some(v) = self.power {
            d.power = v;
        }
        if let Some(v) = self.delta {
            d.delta = v;
        }
        if let Some(v) = self.tau0 {
            d.tau0 = v;
        }
        if let Some(v) = self.sigma1_sq {
            d.sigma1_sq = v;
        }
        if let Some(v) = self.sigma0_sq {
            d.sigma0_sq = v;
        }
        if let Some(s) = &self.alloc_ratio {
            d.alloc_ratio = parse_alloc_ratio(s)?;
        }
        if let Some(v) = self.one_sided {
            d.one_sided = v;
        }
        d.validate()?;
        Ok(d)
    }

    /// Scenarios after applying the `scenario.*` and `sim.*` overrides to
    /// every selected preset.
    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        let ids = self.scenario_ids.clone().unwrap_or_else(|| vec![1, 2, 3, 4, 5]);
        if ids.is_empty() {
            return Err(Error::Config("scenario.ids is empty".into()));
        }
        let mode = match self.propensity_mode.as_deref() {
            None | Some("fit") => PropensityMode::Fit,
            Some("fixed") => PropensityMode::Fixed(self.gamma.clone().unwrap_or_else(|| TRUE_GAMMA.to_vec())),
            Some(other) => {
                return Err(Error::Config(format!(
                    "sim.propensity_mode must be \"fit\" or \"fixed\", found {other:?}"
                )))
            }
        };
        if self.gamma.is_some() && mode == PropensityMode::Fit {
            return Err(Error::Config(
                "sim.gamma requires sim.propensity_mode = \"fixed\"".into(),
            ));
        }
        let mut out = Vec::with_capacity(ids.len());
        for (i, &id) in ids.iter().enumerate() {
            if ids[..i].contains(&id) {
                return Err(Error::Config(format!("scenario {id} listed twice")));
            }
            let mut s = Scenario::preset(id).map_err(|e| Error::Config(e.to_string()))?;
            let h = &mut s.historical;
            for (slot, v) in [
                (&mut h.mu1, self.mu1_h),
                (&mut h.p, self.p_h),
                (&mut h.mu3, self.mu3_h),
                (&mut h.mu4, self.mu4_h),
                (&mut h.var1, self.var1_h),
                (&mut h.var3, self.var3_h),
                (&mut h.var4, self.var4_h),
                (&mut h.error_var, self.error_var_h),
            ] {
                if let Some(v) = v {
                    *slot = v;
                }
            }
            if let Some(b) = self.treatment_effect {
                s.beta[1] = b;
            }
            if let Some(b) = self.beta5 {
                s.beta[5] = b;
            }
            if let Some(n) = self.n_h {
                s.n_h = n;
            }
            s.propensity = mode.clone();
            s.validate()?;
            out.push(s);
        }
        Ok(out)
    }

    /// Full simulation config. `seed` overrides `sim.seed`; one of them
    /// must be present.
    pub fn sim_config(&self, seed: Option<u64>) -> Result<SimConfig> {
        let seed = seed
            .or(self.seed)
            .ok_or_else(|| Error::Config("a seed is required".into()))?;
        let planning = match self.planning_variance.as_deref() {
            Some("error") => PlanningVariance::Error,
            Some("marginal") => PlanningVariance::Marginal,
            Some("design") => PlanningVariance::Design,
            None if self.sigma1_sq.is_some() || self.sigma0_sq.is_some() => PlanningVariance::Design,
            None => PlanningVariance::Error,
            Some(other) => {
                return Err(Error::Config(format!(
                    "sim.planning_variance must be error, marginal or design, found {other:?}"
                )))
            }
        };
        let config = SimConfig {
            design: self.design()?,
            scenarios: self.scenarios()?,
            reps: self.reps.unwrap_or(DEFAULT_REPS),
            seed,
            interim_fraction: self.interim_fraction.unwrap_or(0.5),
            planning,
            normalize_control: self.normalize_control.unwrap_or(false),
            threads: None,
        };
        config.validate()?;
        Ok(config)
    }
}
