//! Simulation scenarios and the data-generating model
//! `y = b0 + b1 a + b2 x1 + b3 x2 + b4 x3 + b5 x4 + eps`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{AllocationRatio, Arm, Dataset, Study, SubjectRecord};
use crate::rng::{Purpose, ReplicationStreams};

/// Covariate names used for simulated datasets.
pub const COVARIATES: [&str; 4] = ["x1", "x2", "x3", "x4"];

/// Generator coefficients of the propensity model on `(1, x1, x2, x3, x4)`.
pub const TRUE_GAMMA: [f64; 5] = [2.030, -0.019, -0.106, 0.095, -0.009];

/// Distribution of one source: `x1 ~ N(mu1, var1)`, `x2 ~ Ber(p)`,
/// `x3 ~ N(mu3, var3)`, `x4 ~ N(mu4, var4)`, `eps ~ N(0, error_var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    pub mu1: f64,
    pub p: f64,
    pub mu3: f64,
    pub mu4: f64,
    pub var1: f64,
    pub var3: f64,
    pub var4: f64,
    pub error_var: f64,
}

impl SourceParams {
    pub const CURRENT: SourceParams = SourceParams {
        mu1: 75.0,
        p: 0.5,
        mu3: 14.0,
        mu4: 21.0,
        var1: 8.5 * 8.5,
        var3: 2.8 * 2.8,
        var4: 3.6 * 3.6,
        error_var: 100.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidParameter(format!("p {} not in (0,1)", self.p)));
        }
        for v in [self.var1, self.var3, self.var4, self.error_var] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("variance {v} must be > 0")));
            }
        }
        for m in [self.mu1, self.mu3, self.mu4] {
            if !m.is_finite() {
                return Err(Error::InvalidParameter("means must be finite".into()));
            }
        }
        Ok(())
    }

    /// Expected control outcome under `beta`.
    pub fn mean_outcome(&self, beta: &[f64; 6]) -> f64 {
        beta[0] + beta[2] * self.mu1 + beta[3] * self.p + beta[4] * self.mu3 + beta[5] * self.mu4
    }

    /// Marginal variance of a control outcome under `beta`.
    pub fn outcome_variance(&self, beta: &[f64; 6]) -> f64 {
        beta[2] * beta[2] * self.var1
            + beta[3] * beta[3] * self.p * (1.0 - self.p)
            + beta[4] * beta[4] * self.var3
            + beta[5] * beta[5] * self.var4
            + self.error_var
    }
}

/// How propensities are obtained inside a replication.
#[derive(Debug, Clone, PartialEq)]
pub enum PropensityMode {
    /// Refit the logistic model on every analysis set.
    Fit,
    /// Use fixed coefficients on `(1, x1, x2, x3, x4)`.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Stream key; distinct scenarios in one run need distinct ids.
    pub id: u8,
    pub label: String,
    pub historical: SourceParams,
    pub current: SourceParams,
    /// `(b0, b1, b2, b3, b4, b5)`; `b1` is the treatment effect.
    pub beta: [f64; 6],
    pub n_h: usize,
    pub propensity: PropensityMode,
}

impl Scenario {
    /// One of the five preset scenarios (ids 1 to 5), null effect.
    pub fn preset(id: u8) -> Result<Scenario> {
        let (mu1, p, mu3, mu4, var1, var3, var4, error_var) = match id {
            1 => (75.0, 0.5, 14.0, 21.0, 8.5 * 8.5, 2.8 * 2.8, 3.6 * 3.6, 100.0),
            2 => (77.0, 0.4, 14.0, 21.0, 8.5 * 8.5, 2.8 * 2.8, 3.6 * 3.6, 100.0),
            3 => (77.0, 0.4, 15.0, 20.0, 64.0, 3.2 * 3.2, 3.7 * 3.7, 100.0),
            4 => (73.0, 0.6, 13.0, 22.0, 64.0, 3.2 * 3.2, 3.7 * 3.7, 100.0),
            5 => (73.0, 0.6, 13.0, 22.0, 49.0, 2.5 * 2.5, 9.0, 64.0),
            _ => return Err(Error::InvalidParameter(format!("no preset scenario {id}"))),
        };
        Ok(Scenario {
            id,
            label: format!("Scenario {id}"),
            historical: SourceParams {
                mu1,
                p,
                mu3,
                mu4,
                var1,
                var3,
                var4,
                error_var,
            },
            current: SourceParams::CURRENT,
            beta: [1.0, 0.0, 1.0, 1.0, 1.0, 1.0],
            n_h: 169,
            propensity: PropensityMode::Fit,
        })
    }

    pub fn presets() -> Vec<Scenario> {
        (1..=5).map(|i| Scenario::preset(i).expect("preset")).collect()
    }

    pub fn treatment_effect(&self) -> f64 {
        self.beta[1]
    }

    pub fn with_effect(mut self, effect: f64) -> Scenario {
        self.beta[1] = effect;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.historical.validate()?;
        self.current.validate()?;
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("beta must be finite".into()));
        }
        if self.n_h < 2 {
            return Err(Error::InvalidParameter("n_h must be >= 2".into()));
        }
        if let PropensityMode::Fixed(g) = &self.propensity {
            if g.len() != COVARIATES.len() + 1 {
                return Err(Error::DimensionMismatch {
                    expected: COVARIATES.len() + 1,
                    got: g.len(),
                });
            }
        }
        Ok(())
    }
}

fn draw_subject<R: Rng + ?Sized>(src: &SourceParams, beta: &[f64; 6], treated: bool, rng: &mut R) -> (Vec<f64>, f64) {
    // Parameters were validated, so the constructors cannot fail.
    let x1 = Normal::new(src.mu1, src.var1.sqrt()).unwrap().sample(rng);
    let x2 = if Bernoulli::new(src.p).unwrap().sample(rng) {
        1.0
    } else {
        0.0
    };
    let x3 = Normal::new(src.mu3, src.var3.sqrt()).unwrap().sample(rng);
    let x4 = Normal::new(src.mu4, src.var4.sqrt()).unwrap().sample(rng);
    let eps = Normal::new(0.0, src.error_var.sqrt()).unwrap().sample(rng);
    let a = if treated { 1.0 } else { 0.0 };
    let y = beta[0] + beta[1] * a + beta[2] * x1 + beta[3] * x2 + beta[4] * x3 + beta[5] * x4 + eps;
    (vec![x1, x2, x3, x4], y)
}

fn names() -> Vec<String> {
    COVARIATES.iter().map(|s| s.to_string()).collect()
}

/// The full historical control cohort of `scenario.n_h` subjects.
pub fn generate_historical(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Dataset {
    let records = (0..scenario.n_h)
        .map(|i| {
            let (x, y) = draw_subject(&scenario.historical, &scenario.beta, false, rng);
            SubjectRecord::new(format!("h{i:05}"), Study::Historical, Arm::Control, x, Some(y))
        })
        .collect();
    Dataset::new(names(), records)
}

/// Current-study subjects in enrollment order, generated on demand.
///
/// Arms come from permuted blocks of the allocation ratio on their own
/// stream, so subject `i` is the same whatever the final size.
#[derive(Debug, Clone)]
pub struct Enrollment {
    source: SourceParams,
    beta: [f64; 6],
    ratio: AllocationRatio,
    subjects: ChaCha8Rng,
    arms: ChaCha8Rng,
    block: Vec<bool>,
    records: Vec<SubjectRecord>,
}

impl Enrollment {
    pub fn new(scenario: &Scenario, ratio: AllocationRatio, streams: &ReplicationStreams) -> Self {
        Self {
            source: scenario.current,
            beta: scenario.beta,
            ratio,
            subjects: streams.get(Purpose::Current),
            arms: streams.get(Purpose::Arms),
            block: Vec::new(),
            records: Vec::new(),
        }
    }

    fn next_arm(&mut self) -> bool {
        if self.block.is_empty() {
            let mut b = vec![true; self.ratio.treated as usize];
            b.extend(std::iter::repeat_n(false, self.ratio.control as usize));
            b.shuffle(&mut self.arms);
            b.reverse();
            self.block = b;
        }
        self.block.pop().expect("non-empty block")
    }

    /// The first `n` enrolled subjects.
    pub fn first(&mut self, n: usize) -> Dataset {
        while self.records.len() < n {
            let i = self.records.len();
            let treated = self.next_arm();
            let (x, y) = draw_subject(&self.source, &self.beta, treated, &mut self.subjects);
            let arm = if treated { Arm::Treated } else { Arm::Control };
            self.records
                .push(SubjectRecord::new(format!("c{i:05}"), Study::Current, arm, x, Some(y)));
        }
        Dataset::new(names(), self.records[..n].to_vec())
    }
}

/// Current cohort of `n_current` subjects and the historical cohort of one
/// replication.
pub fn generate_scenario_data(
    scenario: &Scenario,
    ratio: AllocationRatio,
    n_current: usize,
    streams: &ReplicationStreams,
) -> Result<(Dataset, Dataset)> {
    scenario.validate()?;
    let block = (ratio.treated + ratio.control) as usize;
    if n_current < block {
        return Err(Error::InvalidParameter(format!(
            "n_current {n_current} smaller than one allocation block ({block})"
        )));
    }
    let historical = generate_historical(scenario, &mut streams.get(Purpose::Historical));
    let current = Enrollment::new(scenario, ratio, streams).first(n_current);
    Ok((current, historical))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn streams() -> ReplicationStreams {
        ReplicationStreams::new(42, 1, 0)
    }

    #[test]
    fn scenario1_current_moments() {
        let s = Scenario::preset(1).unwrap();
        let n = 100_000;
        let (cur, _) = generate_scenario_data(&s, AllocationRatio::TWO_TO_ONE, n, &streams()).unwrap();
        let nf = n as f64;
        let m1 = cur.records.iter().map(|r| r.x[0]).sum::<f64>() / nf;
        let p = cur.records.iter().map(|r| r.x[1]).sum::<f64>() / nf;
        assert!((m1 - 75.0).abs() < 3.0 * 8.5 / nf.sqrt(), "{m1}");
        assert!((p - 0.5).abs() < 3.0 * (0.25 / nf).sqrt(), "{p}");
    }

    #[test]
    fn null_control_mean() {
        let s = Scenario::preset(1).unwrap();
        assert_eq!(s.current.mean_outcome(&s.beta), 111.5);
        let n = 60_000;
        let (cur, _) = generate_scenario_data(&s, AllocationRatio::TWO_TO_ONE, n, &streams()).unwrap();
        let ys: Vec<f64> = cur.records.iter().map(|r| r.y.unwrap()).collect();
        let m = ys.iter().sum::<f64>() / n as f64;
        let sd = s.current.outcome_variance(&s.beta).sqrt();
        assert!((m - 111.5).abs() < 4.0 * sd / (n as f64).sqrt(), "{m}");
    }

    #[test]
    fn allocation_is_blocked() {
        let s = Scenario::preset(2).unwrap();
        let (cur, hist) = generate_scenario_data(&s, AllocationRatio::TWO_TO_ONE, 300, &streams()).unwrap();
        assert_eq!(hist.len(), 169);
        assert!(hist
            .records
            .iter()
            .all(|r| r.arm == Arm::Control && r.study == Study::Historical));
        for block in cur.records.chunks(3) {
            assert_eq!(block.iter().filter(|r| r.arm == Arm::Treated).count(), 2);
        }
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let s = Scenario::preset(3).unwrap();
        let a = generate_scenario_data(&s, AllocationRatio::TWO_TO_ONE, 50, &streams()).unwrap();
        let b = generate_scenario_data(&s, AllocationRatio::TWO_TO_ONE, 50, &streams()).unwrap();
        assert_eq!(a, b);
        let mut e = Enrollment::new(&s, AllocationRatio::TWO_TO_ONE, &streams());
        let short = e.first(20);
        let long = e.first(80);
        assert_eq!(short.records[..], long.records[..20]);
        assert_eq!(long.records[..50], a.0.records[..]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = Scenario::preset(1).unwrap();
        assert!(generate_scenario_data(&s, AllocationRatio::TWO_TO_ONE, 2, &streams()).is_err());
        assert!(Scenario::preset(6).is_err());
        let mut bad = s.clone();
        bad.historical.p = 1.0;
        assert!(bad.validate().is_err());
    }
}
