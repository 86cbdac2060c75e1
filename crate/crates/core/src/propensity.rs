//! Study-membership propensity `Pr(R=1 | X)` and the fusion weights built
//! from it.
//!
//! The model is an ordinary logistic regression fitted by iteratively
//! reweighted least squares. Covariates are standardized internally and the
//! coefficients mapped back, so `gamma` is always on the caller's scale with
//! the intercept first.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Arm, Dataset, Study};

/// Propensities are clamped to `[CLAMP, 1 - CLAMP]`.
pub const PROPENSITY_CLAMP: f64 = 1e-12;

// Standardized coefficients beyond this are treated as diverging.
const DIVERGENCE_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence threshold on the largest coefficient change.
    pub tol: f64,
    /// Penalty used for the fallback refit under separation.
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            tol: 1e-8,
            ridge: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    /// Intercept first, then one coefficient per covariate.
    pub gamma: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Euclidean norm of the unpenalized score at `gamma`.
    pub final_gradient_norm: f64,
    /// Set when separation forced the ridge-penalized refit.
    pub ridge_applied: bool,
}

impl PropensityModel {
    /// A model with fixed coefficients, e.g. a known generating model.
    pub fn from_coefficients(gamma: Vec<f64>) -> Self {
        Self {
            gamma,
            converged: true,
            iterations: 0,
            final_gradient_norm: f64::NAN,
            ridge_applied: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn linear_predictor(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.gamma[0] + self.gamma[1..].iter().zip(x).map(|(g, v)| g * v).sum::<f64>())
    }

    /// `Pr(R=1 | x)`, clamped away from 0 and 1.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(clamp_propensity(logistic(self.linear_predictor(x)?)))
    }

    pub fn predict_all(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        dataset.records.iter().map(|r| self.predict(&r.x)).collect()
    }
}

/// Convenience wrapper matching [`PropensityModel::predict`].
pub fn predict_propensity(model: &PropensityModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}

#[inline]
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let t = eta.exp();
        t / (1.0 + t)
    }
}

#[inline]
pub fn clamp_propensity(e: f64) -> f64 {
    e.clamp(PROPENSITY_CLAMP, 1.0 - PROPENSITY_CLAMP)
}

// log(1 + exp(eta)) without overflow.
#[inline]
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

/// Log-likelihood of the membership model at `gamma` (original scale).
pub fn log_likelihood(dataset: &Dataset, gamma: &[f64]) -> Result<f64> {
    let model = PropensityModel::from_coefficients(gamma.to_vec());
    dataset.records.iter().try_fold(0.0, |acc, r| {
        let eta = model.linear_predictor(&r.x)?;
        Ok(acc + r.study.indicator() * eta - softplus(eta))
    })
}

/// Analytic score `sum_i (r_i - e_i) z_i` at `gamma` (original scale).
pub fn score(dataset: &Dataset, gamma: &[f64]) -> Result<Vec<f64>> {
    let model = PropensityModel::from_coefficients(gamma.to_vec());
    let mut g = vec![0.0; gamma.len()];
    for r in &dataset.records {
        let resid = r.study.indicator() - logistic(model.linear_predictor(&r.x)?);
        g[0] += resid;
        for (gj, xj) in g[1..].iter_mut().zip(&r.x) {
            *gj += resid * xj;
        }
    }
    Ok(g)
}

struct Standardized {
    design: DMatrix<f64>,
    center: Vec<f64>,
    scale: Vec<f64>,
    response: DVector<f64>,
}

fn standardize(dataset: &Dataset) -> Result<Standardized> {
    let n = dataset.len();
    let p = dataset.dim();
    let mut center = vec![0.0; p];
    let mut scale = vec![0.0; p];
    for j in 0..p {
        let col: Vec<f64> = dataset.records.iter().map(|r| r.x[j]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1).max(1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::SingularDesign);
        }
        center[j] = mean;
        scale[j] = sd;
    }
    let design = DMatrix::from_fn(n, p + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            (dataset.records[i].x[j - 1] - center[j - 1]) / scale[j - 1]
        }
    });
    let response = DVector::from_iterator(n, dataset.records.iter().map(|r| r.study.indicator()));
    Ok(Standardized {
        design,
        center,
        scale,
        response,
    })
}

struct Irls {
    beta: DVector<f64>,
    converged: bool,
    iterations: usize,
}

fn penalized_loglik(s: &Standardized, beta: &DVector<f64>, ridge: f64) -> f64 {
    let eta = &s.design * beta;
    let ll: f64 = eta
        .iter()
        .zip(s.response.iter())
        .map(|(&e, &r)| r * e - softplus(e))
        .sum();
    ll - 0.5 * ridge * beta.rows(1, beta.len() - 1).norm_squared()
}

fn irls(s: &Standardized, opts: &FitOptions, ridge: f64) -> Result<Irls> {
    let k = s.design.ncols();
    let mut beta = DVector::zeros(k);
    let mut ll = penalized_loglik(s, &beta, ridge);
    for it in 1..=opts.max_iter {
        let eta = &s.design * &beta;
        let mu = eta.map(logistic);
        let w = mu.map(|m| m * (1.0 - m));
        let mut grad = s.design.tr_mul(&(&s.response - &mu));
        let mut hess = s
            .design
            .tr_mul(&DMatrix::from_fn(s.design.nrows(), k, |i, j| s.design[(i, j)] * w[i]));
        for j in 1..k {
            grad[j] -= ridge * beta[j];
            hess[(j, j)] += ridge;
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => hess.lu().solve(&grad).ok_or(Error::SingularDesign)?,
        };
        if step.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularDesign);
        }

        // Step halving keeps the (penalized) likelihood monotone.
        let mut scale = 1.0;
        let mut next = &beta + &step;
        let mut next_ll = penalized_loglik(s, &next, ridge);
        while next_ll < ll - 1e-12 * ll.abs().max(1.0) && scale > 1e-6 {
            scale *= 0.5;
            next = &beta + &step * scale;
            next_ll = penalized_loglik(s, &next, ridge);
        }
        let change = (&next - &beta).amax();
        beta = next;
        ll = next_ll;

        if beta.amax() > DIVERGENCE_BOUND {
            return Ok(Irls {
                beta,
                converged: false,
                iterations: it,
            });
        }
        if change < opts.tol {
            return Ok(Irls {
                beta,
                converged: true,
                iterations: it,
            });
        }
    }
    Ok(Irls {
        beta,
        converged: false,
        iterations: opts.max_iter,
    })
}

/// Maximum-likelihood fit of `Pr(R=1 | X)` by IRLS.
///
/// Under (quasi-)separation the unpenalized iterations diverge; the model is
/// then refitted with a small ridge penalty on the slopes and returned with
/// `converged = false` and `ridge_applied = true`.
pub fn fit_propensity(dataset: &Dataset, opts: &FitOptions) -> Result<PropensityModel> {
    let n_c = dataset.n_current();
    if n_c == 0 || n_c == dataset.len() {
        return Err(Error::SingleSource(n_c as f64 / dataset.len().max(1) as f64));
    }
    dataset.ensure_valid()?;
    let s = standardize(dataset)?;

    let mut fit = irls(&s, opts, 0.0)?;
    let mut ridge_applied = false;
    if !fit.converged {
        fit = irls(&s, opts, opts.ridge)?;
        fit.converged = false;
        ridge_applied = true;
    }

    let p = dataset.dim();
    let mut gamma = vec![0.0; p + 1];
    gamma[0] = fit.beta[0];
    for j in 0..p {
        gamma[j + 1] = fit.beta[j + 1] / s.scale[j];
        gamma[0] -= fit.beta[j + 1] * s.center[j] / s.scale[j];
    }
    let g = score(dataset, &gamma)?;
    let final_gradient_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();

    Ok(PropensityModel {
        gamma,
        converged: fit.converged,
        iterations: fit.iterations,
        final_gradient_norm,
        ridge_applied,
    })
}

/// Per-subject fusion weights and the empirical proportions behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    /// `Pr(R=1 | X)` per subject, after clamping.
    pub e: Vec<f64>,
    /// `0.5 * R / P(R=1)`.
    pub w_r1: Vec<f64>,
    /// `0.5 / P(R=1) * (1-R) e / (1-e)`.
    pub w_r0: Vec<f64>,
    /// `P(R=1) = n_c / n`.
    pub p_r1: f64,
    /// `P(A=1)` over the whole dataset; absent when arms are masked.
    pub p_a1: Option<f64>,
    /// `P(A=0 | R=1)`; absent when arms are masked.
    pub p_a0_given_r1: Option<f64>,
}

impl WeightSet {
    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }

    /// The weight a subject carries in its own source, `w_r1 + w_r0`.
    #[inline]
    pub fn source_weight(&self, i: usize) -> f64 {
        self.w_r1[i] + self.w_r0[i]
    }

    /// `k = P(R=1) / P(R=0)`.
    pub fn source_ratio(&self) -> f64 {
        self.p_r1 / (1.0 - self.p_r1)
    }
}

/// Where the propensities for [`compute_weights`] come from.
#[derive(Debug, Clone, Copy)]
pub enum Propensities<'a> {
    Model(&'a PropensityModel),
    Fixed(&'a [f64]),
}

pub fn compute_weights(dataset: &Dataset, propensities: Propensities<'_>) -> Result<WeightSet> {
    let e: Vec<f64> = match propensities {
        Propensities::Model(m) => m.predict_all(dataset)?,
        Propensities::Fixed(v) => {
            if v.len() != dataset.len() {
                return Err(Error::DimensionMismatch {
                    expected: dataset.len(),
                    got: v.len(),
                });
            }
            v.iter()
                .map(|&e| {
                    if e.is_finite() {
                        Ok(clamp_propensity(e))
                    } else {
                        Err(Error::Numerical(format!("non-finite propensity {e}")))
                    }
                })
                .collect::<Result<_>>()?
        }
    };

    let n = dataset.len();
    let n_c = dataset.n_current();
    let p_r1 = n_c as f64 / n.max(1) as f64;
    if n_c == 0 || n_c == n {
        return Err(Error::SingleSource(p_r1));
    }

    let mut w_r1 = vec![0.0; n];
    let mut w_r0 = vec![0.0; n];
    let mut treated = 0usize;
    let mut current_controls = 0usize;
    let mut masked = false;
    for (i, r) in dataset.records.iter().enumerate() {
        match r.study {
            Study::Current => {
                w_r1[i] = 0.5 / p_r1;
                match r.arm {
                    Arm::Treated => treated += 1,
                    Arm::Control => current_controls += 1,
                    Arm::Masked => masked = true,
                }
            }
            Study::Historical => {
                if e[i] >= 1.0 - PROPENSITY_CLAMP {
                    return Err(Error::Numerical(format!(
                        "propensity of historical subject {} is 1",
                        r.id
                    )));
                }
                w_r0[i] = 0.5 / p_r1 * e[i] / (1.0 - e[i]);
            }
        }
    }

    let (p_a1, p_a0_given_r1) = if masked {
        (None, None)
    } else {
        (
            Some(treated as f64 / n as f64),
            Some(current_controls as f64 / n_c as f64),
        )
    };

    Ok(WeightSet {
        e,
        w_r1,
        w_r0,
        p_r1,
        p_a1,
        p_a0_given_r1,
    })
}

/// Min, quartiles and max with linear interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumber {
    pub fn of(values: &[f64]) -> Option<FiveNumber> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(FiveNumber {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}
