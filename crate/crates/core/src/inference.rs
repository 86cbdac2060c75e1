//! Final analysis: historical-control sampling, the IPW test with its
//! sandwich variance, the underlying estimating equation, and the unadjusted
//! two-sample t-test used as a comparator.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::model::{Arm, Dataset, DesignParams, Study};
use crate::normal::two_sided_p;
use crate::propensity::WeightSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    /// Treated mean estimate.
    pub theta1_hat: f64,
    /// Control mean estimate (current-study population).
    pub theta0_hat: f64,
    /// Variance of the standardized contrast; pooled variance for the t-test.
    pub sigma_star_sq: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    /// Number of subjects in the analysis.
    pub n_used: usize,
    /// Degrees of freedom when the reference distribution is Student's t.
    pub df: Option<f64>,
}

/// Draws `m` historical subjects uniformly without replacement.
///
/// The result keeps the source order. Only historical records of
/// `historical` are eligible.
pub fn sample_historical_controls<R: Rng + ?Sized>(historical: &Dataset, m: usize, rng: &mut R) -> Result<Dataset> {
    let pool: Vec<usize> = historical
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.study == Study::Historical)
        .map(|(i, _)| i)
        .collect();
    if m > pool.len() {
        return Err(Error::PoolExhausted {
            requested: m,
            available: pool.len(),
            shortfall: m - pool.len(),
        });
    }
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, pool.len(), m)
        .into_iter()
        .map(|k| pool[k])
        .collect();
    picked.sort_unstable();
    Ok(Dataset {
        records: picked.into_iter().map(|i| historical.records[i].clone()).collect(),
        covariate_names: historical.covariate_names.clone(),
        enrollment_ordered: historical.enrollment_ordered,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IpwOptions {
    /// Divide the control estimate by the realized composite weight mass
    /// instead of `N` (Hajek form). Off by default.
    pub normalize_control: bool,
}

/// Observed inputs of the IPW analysis, checked once.
struct Analysis {
    a: Vec<f64>,
    y: Vec<f64>,
    /// `(1-A)/P(A=0|R=1) * w_r1 + w_r0`
    control_weight: Vec<f64>,
    p_a1: f64,
}

impl Analysis {
    fn new(data: &Dataset, weights: &WeightSet) -> Result<Self> {
        if data.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                got: weights.len(),
            });
        }
        let mut a = Vec::with_capacity(data.len());
        let mut y = Vec::with_capacity(data.len());
        for r in &data.records {
            a.push(r.arm.indicator().ok_or_else(|| Error::MaskedArm(r.id.clone()))?);
            y.push(r.y.ok_or_else(|| Error::MissingOutcome(r.id.clone()))?);
        }
        let (p_a1, p_a0) = match (weights.p_a1, weights.p_a0_given_r1) {
            (Some(p1), Some(p0)) => (p1, p0),
            _ => return Err(Error::InvalidData("weights were computed with masked arms".into())),
        };
        if !(p_a1 > 0.0) || !(p_a0 > 0.0) {
            return Err(Error::InvalidData("both arms must be present".into()));
        }
        if data.n_historical() == 0 || data.n_current() == 0 {
            return Err(Error::InvalidData("both sources must be present".into()));
        }
        let control_weight = (0..data.len())
            .map(|i| (1.0 - a[i]) / p_a0 * weights.w_r1[i] + weights.w_r0[i])
            .collect();
        Ok(Self {
            a,
            y,
            control_weight,
            p_a1,
        })
    }

    fn n(&self) -> f64 {
        self.y.len() as f64
    }

    fn theta1(&self) -> f64 {
        self.a.iter().zip(&self.y).map(|(a, y)| a * y).sum::<f64>() / (self.n() * self.p_a1)
    }

    fn theta0(&self, normalize: bool) -> f64 {
        let num: f64 = self.control_weight.iter().zip(&self.y).map(|(c, y)| c * y).sum();
        if normalize {
            num / self.control_weight.iter().sum::<f64>()
        } else {
            num / self.n()
        }
    }
}

/// Composite control weights `(1-A)/P(A=0|R=1) * w_r1 + w_r0`.
pub fn composite_control_weights(data: &Dataset, weights: &WeightSet) -> Result<Vec<f64>> {
    Ok(Analysis::new(data, weights)?.control_weight)
}

pub fn ipw_test(data: &Dataset, weights: &WeightSet, design: &DesignParams) -> Result<TestResult> {
    ipw_test_with(data, weights, design, IpwOptions::default())
}

/// IPW contrast of treated versus borrowed-control means, standardized by
/// the diagonal sandwich variance and referred to the standard normal.
pub fn ipw_test_with(
    data: &Dataset,
    weights: &WeightSet,
    design: &DesignParams,
    opts: IpwOptions,
) -> Result<TestResult> {
    let an = Analysis::new(data, weights)?;
    let n = an.n();
    let theta1 = an.theta1();
    let theta0 = an.theta0(opts.normalize_control);

    let p2 = an.p_a1 * an.p_a1;
    let sigma_star_sq = (0..an.y.len())
        .map(|i| {
            let c = an.control_weight[i];
            an.a[i] / p2 * (an.y[i] - theta1).powi(2) + c * c * (an.y[i] - theta0).powi(2)
        })
        .sum::<f64>()
        / n;
    if !(sigma_star_sq > 0.0) {
        return Err(Error::DegenerateVariance);
    }

    let statistic = (theta1 - theta0 - design.tau0) / (sigma_star_sq / n).sqrt();
    let p_value = two_sided_p(statistic);
    Ok(TestResult {
        theta1_hat: theta1,
        theta0_hat: theta0,
        sigma_star_sq,
        statistic,
        p_value,
        reject: p_value < design.alpha,
        n_used: an.y.len(),
        df: None,
    })
}

/// The stacked estimating function summed over subjects and divided by `N`:
/// `[ A/P(A=1) (Y - theta1),  c (Y - theta0) ]`.
pub fn estimating_equation_residual(data: &Dataset, weights: &WeightSet, theta1: f64, theta0: f64) -> Result<[f64; 2]> {
    let an = Analysis::new(data, weights)?;
    let mut out = [0.0; 2];
    for i in 0..an.y.len() {
        out[0] += an.a[i] / an.p_a1 * (an.y[i] - theta1);
        out[1] += an.control_weight[i] * (an.y[i] - theta0);
    }
    Ok([out[0] / an.n(), out[1] / an.n()])
}

/// Root of the estimating equation: the treated mean and the
/// weight-normalized control mean.
pub fn solve_estimating_equation(data: &Dataset, weights: &WeightSet) -> Result<[f64; 2]> {
    let an = Analysis::new(data, weights)?;
    Ok([an.theta1(), an.theta0(true)])
}

/// Empirical covariance of the per-subject estimating functions evaluated
/// at `(theta1, theta0)`. The off-diagonal entries vanish because a subject
/// contributes to at most one of the two rows.
pub fn sandwich_covariance(data: &Dataset, weights: &WeightSet, theta1: f64, theta0: f64) -> Result<[[f64; 2]; 2]> {
    let an = Analysis::new(data, weights)?;
    let mut s = [[0.0; 2]; 2];
    for i in 0..an.y.len() {
        let psi = [
            an.a[i] / an.p_a1 * (an.y[i] - theta1),
            an.control_weight[i] * (an.y[i] - theta0),
        ];
        for (j, row) in s.iter_mut().enumerate() {
            for (k, cell) in row.iter_mut().enumerate() {
                *cell += psi[j] * psi[k];
            }
        }
    }
    for row in &mut s {
        for cell in row.iter_mut() {
            *cell /= an.n();
        }
    }
    Ok(s)
}

/// Pooled-variance two-sample t-test, treated versus all controls (current
/// and historical together), without any weighting.
pub fn t_test_unadjusted(pooled: &Dataset, design: &DesignParams) -> Result<TestResult> {
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for r in &pooled.records {
        let y = r.y.ok_or_else(|| Error::MissingOutcome(r.id.clone()))?;
        match r.arm {
            Arm::Treated => treated.push(y),
            Arm::Control => control.push(y),
            Arm::Masked => return Err(Error::MaskedArm(r.id.clone())),
        }
    }
    if treated.len() < 2 || control.len() < 2 {
        return Err(Error::InvalidData("each arm needs at least 2 subjects".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ss = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    let (n1, n0) = (treated.len() as f64, control.len() as f64);
    let (m1, m0) = (mean(&treated), mean(&control));
    let df = n1 + n0 - 2.0;
    let pooled_var = (ss(&treated, m1) + ss(&control, m0)) / df;
    if !(pooled_var > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let statistic = (m1 - m0 - design.tau0) / (pooled_var * (1.0 / n1 + 1.0 / n0)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numerical(e.to_string()))?;
    let p_value = (2.0 * dist.cdf(-statistic.abs())).min(1.0);
    Ok(TestResult {
        theta1_hat: m1,
        theta0_hat: m0,
        sigma_star_sq: pooled_var,
        statistic,
        p_value,
        reject: p_value < design.alpha,
        n_used: treated.len() + control.len(),
        df: Some(df),
    })
}
