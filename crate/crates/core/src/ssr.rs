//! Initial sample size and the two blinded re-estimation strategies.
//!
//! Strategy 1 re-estimates the outcome variance from pooled interim data
//! with the fusion weights, never looking at treatment labels. Strategy 2
//! never looks at outcomes: it inflates the design-stage variances by the
//! design effect of the weights.
//!
//! All sizes are reported per group and rounded up after all arithmetic.

use crate::error::{Error, Result};
use crate::model::{Dataset, DesignParams, Study};
use crate::propensity::WeightSet;

pub use crate::normal::z_quantile;

/// `z_{1-alpha/2} + z_{power}` (or `z_{1-alpha}` when one-sided).
pub fn z_sum(design: &DesignParams) -> Result<f64> {
    let a = if design.one_sided {
        design.alpha
    } else {
        design.alpha / 2.0
    };
    Ok(z_quantile(1.0 - a)? + z_quantile(design.power)?)
}

fn round_up(raw: f64) -> Result<usize> {
    if !raw.is_finite() || raw < 0.0 {
        return Err(Error::Numerical(format!("sample size {raw} is not finite")));
    }
    Ok((raw.ceil() as usize).max(1))
}

/// Classical per-group size `2 (z_a + z_b)^2 sigma^2 / delta^2`, rounded up.
pub fn initial_sample_size(design: &DesignParams, sigma: f64) -> Result<usize> {
    design.validate()?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} must be > 0")));
    }
    let z = z_sum(design)?;
    round_up(2.0 * z * z * sigma * sigma / (design.delta * design.delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Weighted one-sample outcome variance.
    OutcomeVariance,
    /// Design-effect inflation of the planning variances.
    WeightVariance,
}

impl Strategy {
    pub fn number(self) -> u8 {
        match self {
            Strategy::OutcomeVariance => 1,
            Strategy::WeightVariance => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsrResult {
    pub strategy: Strategy,
    /// Re-estimated per-group size, `ceil(n_raw)`, at least 1.
    pub n_hat: usize,
    /// Unrounded value of the sizing formula.
    pub n_raw: f64,
    /// Weighted outcome variance (strategy 1).
    pub s1_sq: Option<f64>,
    /// Inflated current-study variance (strategy 2).
    pub sigma1_hat_sq: Option<f64>,
    /// Inflated historical variance (strategy 2).
    pub sigma0_hat_sq: Option<f64>,
    /// Design effects of the current and historical weights (strategy 2).
    pub inflation: Option<(f64, f64)>,
    /// `P(R=1) / P(R=0)` (strategy 2).
    pub k: Option<f64>,
    pub alpha: f64,
    pub power: f64,
    pub delta: f64,
}

impl SsrResult {
    /// `n_hat` raised to `floor` if smaller; enrolled subjects are never
    /// removed.
    pub fn floored(&self, floor: usize) -> usize {
        self.n_hat.max(floor)
    }
}

/// Weighted outcome variance over both sources and the resulting size.
///
/// Arms are never read, so the interim data may be fully masked.
pub fn ssr_strategy1(interim: &Dataset, weights: &WeightSet, design: &DesignParams) -> Result<SsrResult> {
    design.validate()?;
    check_len(interim, weights)?;
    let mut ys = Vec::with_capacity(interim.len());
    for r in &interim.records {
        ys.push(r.y.ok_or_else(|| Error::MissingOutcome(r.id.clone()))?);
    }
    let w: Vec<f64> = (0..interim.len()).map(|i| weights.source_weight(i)).collect();
    let total: f64 = w.iter().sum();
    if !(total > 1.0) {
        return Err(Error::InsufficientWeight(total));
    }
    let mean = w.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / total;
    let ss: f64 = w.iter().zip(&ys).map(|(w, y)| w * (y - mean) * (y - mean)).sum();
    let s1_sq = ss / (total - 1.0);

    let z = z_sum(design)?;
    let n_raw = 2.0 * z * z * s1_sq / (design.delta * design.delta);
    Ok(SsrResult {
        strategy: Strategy::OutcomeVariance,
        n_hat: round_up(n_raw)?,
        n_raw,
        s1_sq: Some(s1_sq),
        sigma1_hat_sq: None,
        sigma0_hat_sq: None,
        inflation: None,
        k: None,
        alpha: design.alpha,
        power: design.power,
        delta: design.delta,
    })
}

/// Design effect `mean(w^2) / mean(w)^2` of one source's weights.
///
/// Equivalent to `P(source) * mean(1_source w^2) / mean(1_source w)^2` over
/// the full interim set.
pub fn design_effect(weights: &[f64]) -> Result<f64> {
    let n = weights.len() as f64;
    let m1 = weights.iter().sum::<f64>() / n;
    let m2 = weights.iter().map(|w| w * w).sum::<f64>() / n;
    if !(m1 > 0.0) {
        return Err(Error::Numerical("zero weight mass in a source".into()));
    }
    Ok(m2 / (m1 * m1))
}

/// Outcome-free re-estimation from the weight distribution alone.
pub fn ssr_strategy2(interim: &Dataset, weights: &WeightSet, design: &DesignParams) -> Result<SsrResult> {
    design.validate()?;
    check_len(interim, weights)?;
    let (mut cur, mut hist) = (Vec::new(), Vec::new());
    for (i, r) in interim.records.iter().enumerate() {
        match r.study {
            Study::Current => cur.push(weights.w_r1[i]),
            Study::Historical => hist.push(weights.w_r0[i]),
        }
    }
    if cur.is_empty() || hist.is_empty() {
        return Err(Error::SingleSource(cur.len() as f64 / interim.len().max(1) as f64));
    }
    let infl1 = design_effect(&cur)?;
    let infl0 = design_effect(&hist)?;
    let sigma1_hat_sq = design.sigma1_sq * infl1;
    let sigma0_hat_sq = design.sigma0_sq * infl0;
    let k = cur.len() as f64 / hist.len() as f64;

    let z = z_sum(design)?;
    let n_raw = (1.0 + k) * z * z * (sigma1_hat_sq / k + sigma0_hat_sq) / (design.delta * design.delta);
    Ok(SsrResult {
        strategy: Strategy::WeightVariance,
        n_hat: round_up(n_raw)?,
        n_raw,
        s1_sq: None,
        sigma1_hat_sq: Some(sigma1_hat_sq),
        sigma0_hat_sq: Some(sigma0_hat_sq),
        inflation: Some((infl1, infl0)),
        k: Some(k),
        alpha: design.alpha,
        power: design.power,
        delta: design.delta,
    })
}

fn check_len(d: &Dataset, w: &WeightSet) -> Result<()> {
    if d.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            got: w.len(),
        });
    }
    Ok(())
}
