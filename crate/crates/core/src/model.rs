//! Domain types for hybrid-control trial data.
//!
//! A [`Dataset`] holds subjects from the current randomized study and from a
//! historical control study. Blinding is carried in the types: an arm can be
//! [`Arm::Masked`] and an outcome can be absent (`None`), so routines that must
//! not look at either simply never match on them.

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};

/// Study membership, the `R` indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Study {
    Historical,
    Current,
}

impl Study {
    /// `R` as a number: 1 for the current study, 0 for historical.
    #[inline]
    pub fn indicator(self) -> f64 {
        match self {
            Study::Current => 1.0,
            Study::Historical => 0.0,
        }
    }

    pub fn from_indicator(r: u8) -> Option<Self> {
        match r {
            0 => Some(Study::Historical),
            1 => Some(Study::Current),
            _ => None,
        }
    }
}

/// Treatment assignment, the `A` indicator, possibly hidden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    Control,
    Treated,
    Masked,
}

impl Arm {
    /// `A` as a number, or `None` when masked.
    #[inline]
    pub fn indicator(self) -> Option<f64> {
        match self {
            Arm::Treated => Some(1.0),
            Arm::Control => Some(0.0),
            Arm::Masked => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: String,
    pub study: Study,
    pub arm: Arm,
    pub x: Vec<f64>,
    pub y: Option<f64>,
}

impl SubjectRecord {
    pub fn new(id: impl Into<String>, study: Study, arm: Arm, x: Vec<f64>, y: Option<f64>) -> Self {
        Self {
            id: id.into(),
            study,
            arm,
            x,
            y,
        }
    }

    #[inline]
    pub fn is_current(&self) -> bool {
        self.study == Study::Current
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<SubjectRecord>,
    pub covariate_names: Vec<String>,
    pub enrollment_ordered: bool,
}

impl Dataset {
    pub fn new(covariate_names: Vec<String>, records: Vec<SubjectRecord>) -> Self {
        Self {
            records,
            covariate_names,
            enrollment_ordered: true,
        }
    }

    pub fn empty(covariate_names: Vec<String>) -> Self {
        Self::new(covariate_names, Vec::new())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.records.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of covariates `p`.
    #[inline]
    pub fn dim(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n_current(&self) -> usize {
        self.records.iter().filter(|r| r.is_current()).count()
    }

    pub fn n_historical(&self) -> usize {
        self.len() - self.n_current()
    }

    pub fn current(&self) -> impl Iterator<Item = &SubjectRecord> {
        self.records.iter().filter(|r| r.is_current())
    }

    pub fn historical(&self) -> impl Iterator<Item = &SubjectRecord> {
        self.records.iter().filter(|r| !r.is_current())
    }

    /// Sub-dataset of the records matching `keep`, order preserved.
    pub fn filtered(&self, keep: impl Fn(&SubjectRecord) -> bool) -> Dataset {
        Dataset {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            covariate_names: self.covariate_names.clone(),
            enrollment_ordered: self.enrollment_ordered,
        }
    }

    /// Concatenates `other`'s records after this dataset's records.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.covariate_names != other.covariate_names {
            return Err(Error::InvalidData("covariate names differ".into()));
        }
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        Ok(Dataset {
            records,
            covariate_names: self.covariate_names.clone(),
            enrollment_ordered: self.enrollment_ordered && other.enrollment_ordered,
        })
    }

    /// Copy with every current-study arm replaced by [`Arm::Masked`].
    pub fn masked_arms(&self) -> Dataset {
        let mut d = self.clone();
        for r in d.records.iter_mut().filter(|r| r.study == Study::Current) {
            r.arm = Arm::Masked;
        }
        d
    }

    /// Copy with every outcome removed.
    pub fn without_outcomes(&self) -> Dataset {
        let mut d = self.clone();
        for r in &mut d.records {
            r.y = None;
        }
        d
    }

    /// Checks the type invariants, returning one entry per breach.
    pub fn validate(&self) -> Vec<Violation> {
        let p = self.dim();
        let mut seen = HashSet::with_capacity(self.len());
        let mut out = Vec::new();
        for r in &self.records {
            let mut push = |kind| out.push(Violation { id: r.id.clone(), kind });
            if r.id.is_empty() {
                push(ViolationKind::EmptyId);
            } else if !seen.insert(r.id.as_str()) {
                push(ViolationKind::DuplicateId);
            }
            if r.study == Study::Historical && r.arm == Arm::Treated {
                push(ViolationKind::HistoricalTreated);
            }
            if r.x.len() != p {
                push(ViolationKind::CovariateLength {
                    expected: p,
                    got: r.x.len(),
                });
            } else if r.x.iter().any(|v| !v.is_finite()) {
                push(ViolationKind::IncompleteCovariates);
            }
            if matches!(r.y, Some(y) if !y.is_finite()) {
                push(ViolationKind::NonFiniteOutcome);
            }
        }
        out
    }

    /// Fails with the first violation, if any.
    pub fn ensure_valid(&self) -> Result<()> {
        match self.validate().into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidData(v.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub id: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    EmptyId,
    DuplicateId,
    HistoricalTreated,
    CovariateLength { expected: usize, got: usize },
    IncompleteCovariates,
    NonFiniteOutcome,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::EmptyId => write!(f, "empty id"),
            ViolationKind::DuplicateId => write!(f, "duplicate id"),
            ViolationKind::HistoricalTreated => write!(f, "historical subject with a=1"),
            ViolationKind::CovariateLength { expected, got } => {
                write!(f, "covariate length {got}, expected {expected}")
            }
            ViolationKind::IncompleteCovariates => write!(f, "incomplete covariates"),
            ViolationKind::NonFiniteOutcome => write!(f, "non-finite outcome"),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.id, self.kind)
    }
}

/// Randomization ratio treated:control within the current study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocationRatio {
    pub treated: u32,
    pub control: u32,
}

impl AllocationRatio {
    pub const ONE_TO_ONE: Self = Self { treated: 1, control: 1 };
    pub const TWO_TO_ONE: Self = Self { treated: 2, control: 1 };
}

impl Default for AllocationRatio {
    fn default() -> Self {
        Self::TWO_TO_ONE
    }
}

impl fmt::Display for AllocationRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.treated, self.control)
    }
}

/// Design-stage inputs shared by the sizing and testing routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignParams {
    /// Type I error rate; two-sided unless `one_sided` is set.
    pub alpha: f64,
    /// Target power, 1 - beta.
    pub power: f64,
    /// Expected effect size in outcome units.
    pub delta: f64,
    /// Null-hypothesis difference theta1 - theta0.
    pub tau0: f64,
    /// Planning variance for the current study.
    pub sigma1_sq: f64,
    /// Planning variance for the historical study.
    pub sigma0_sq: f64,
    pub alloc_ratio: AllocationRatio,
    /// Use z_{1-alpha} instead of z_{1-alpha/2} in the sizing formulas.
    pub one_sided: bool,
}

impl Default for DesignParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            power: 0.8,
            delta: 3.5,
            tau0: 0.0,
            sigma1_sq: 100.0,
            sigma0_sq: 100.0,
            alloc_ratio: AllocationRatio::TWO_TO_ONE,
            one_sided: false,
        }
    }
}

impl DesignParams {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.alpha) {
            return Err(Error::InvalidParameter(format!("alpha {} not in (0,1)", self.alpha)));
        }
        if !open_unit(self.power) {
            return Err(Error::InvalidParameter(format!("power {} not in (0,1)", self.power)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta {} must be > 0", self.delta)));
        }
        if !self.tau0.is_finite() {
            return Err(Error::InvalidParameter("tau0 must be finite".into()));
        }
        if !(self.sigma1_sq > 0.0 && self.sigma0_sq > 0.0) {
            return Err(Error::InvalidParameter("planning variances must be > 0".into()));
        }
        if self.alloc_ratio.treated < 1 || self.alloc_ratio.control < 1 {
            return Err(Error::InvalidParameter(format!(
                "allocation ratio {} must have components >= 1",
                self.alloc_ratio
            )));
        }
        Ok(())
    }
}

/// Rows of the baseline summary table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    HistoricalControl,
    CurrentControl,
    CurrentTreated,
    CurrentTotal,
}

impl Group {
    pub fn label(self) -> &'static str {
        match self {
            Group::HistoricalControl => "historical_placebo",
            Group::CurrentControl => "current_placebo",
            Group::CurrentTreated => "current_treated",
            Group::CurrentTotal => "current_total",
        }
    }
}

/// Mean and n-1 standard deviation. `sd` is absent for a single value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub sd: Option<f64>,
}

impl Moments {
    pub fn of(values: &[f64]) -> Option<Moments> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let rough = values.iter().sum::<f64>() / n as f64;
        let mean = rough + values.iter().map(|v| v - rough).sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Some(Moments { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub group: Group,
    pub count: usize,
    pub covariates: Vec<Option<Moments>>,
    pub outcome: Option<Moments>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub covariate_names: Vec<String>,
    pub masked: bool,
    pub rows: Vec<GroupSummary>,
}

impl SummaryTable {
    pub fn row(&self, group: Group) -> Option<&GroupSummary> {
        self.rows.iter().find(|r| r.group == group)
    }
}

/// Baseline summary per group.
///
/// With `masked` the arm-specific rows are dropped and the current-study
/// outcome is pooled; the arm field of current-study records is not read.
pub fn summarize(dataset: &Dataset, masked: bool) -> Result<SummaryTable> {
    let p = dataset.dim();
    let group_of = |r: &SubjectRecord| -> Result<Group> {
        match (r.study, r.arm) {
            (Study::Historical, _) => Ok(Group::HistoricalControl),
            (Study::Current, Arm::Control) => Ok(Group::CurrentControl),
            (Study::Current, Arm::Treated) => Ok(Group::CurrentTreated),
            (Study::Current, Arm::Masked) => Err(Error::MaskedArm(r.id.clone())),
        }
    };

    let groups: &[Group] = if masked {
        &[Group::HistoricalControl, Group::CurrentTotal]
    } else {
        &[
            Group::HistoricalControl,
            Group::CurrentControl,
            Group::CurrentTreated,
            Group::CurrentTotal,
        ]
    };

    let mut members: Vec<Vec<&SubjectRecord>> = vec![Vec::new(); groups.len()];
    for r in &dataset.records {
        if r.study == Study::Historical {
            members[0].push(r);
            continue;
        }
        // CurrentTotal is always the last slot.
        members[groups.len() - 1].push(r);
        if !masked {
            let g = group_of(r)?;
            let slot = groups.iter().position(|x| *x == g).expect("arm group present");
            members[slot].push(r);
        }
    }

    let rows = groups
        .iter()
        .zip(&members)
        .map(|(&group, recs)| {
            let covariates = (0..p)
                .map(|j| Moments::of(&recs.iter().map(|r| r.x[j]).collect::<Vec<_>>()))
                .collect();
            let ys: Vec<f64> = recs.iter().filter_map(|r| r.y).collect();
            GroupSummary {
                group,
                count: recs.len(),
                covariates,
                outcome: Moments::of(&ys),
            }
        })
        .collect();

    Ok(SummaryTable {
        covariate_names: dataset.covariate_names.clone(),
        masked,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, study: Study, arm: Arm, x: f64, y: Option<f64>) -> SubjectRecord {
        SubjectRecord::new(id, study, arm, vec![x], y)
    }

    fn five() -> Dataset {
        Dataset::new(
            vec!["age".into()],
            vec![
                rec("t1", Study::Current, Arm::Treated, 70.0, Some(10.0)),
                rec("t2", Study::Current, Arm::Treated, 72.0, Some(12.0)),
                rec("c1", Study::Current, Arm::Control, 74.0, Some(9.0)),
                rec("h1", Study::Historical, Arm::Control, 76.0, Some(8.0)),
                rec("h2", Study::Historical, Arm::Control, 78.0, Some(7.0)),
            ],
        )
    }

    #[test]
    fn well_formed_dataset_has_no_violations() {
        assert!(five().validate().is_empty());
    }

    #[test]
    fn historical_treated_is_flagged() {
        let mut d = five();
        d.records[3].arm = Arm::Treated;
        let v = d.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].id, "h1");
        assert_eq!(v[0].kind.to_string(), "historical subject with a=1");
    }

    #[test]
    fn duplicate_id_is_flagged() {
        let mut d = five();
        d.records[4].id = "h1".into();
        let v = d.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind.to_string(), "duplicate id");
    }

    #[test]
    fn incomplete_covariates_are_flagged() {
        let mut d = five();
        d.records[0].x[0] = f64::NAN;
        d.records[1].x.push(1.0);
        let kinds: Vec<_> = d.validate().into_iter().map(|v| v.kind).collect();
        assert_eq!(kinds[0], ViolationKind::IncompleteCovariates);
        assert!(matches!(
            kinds[1],
            ViolationKind::CovariateLength { expected: 1, got: 2 }
        ));
    }

    #[test]
    fn constant_column_has_zero_sd() {
        let recs = (0..10)
            .map(|i| rec(&format!("h{i}"), Study::Historical, Arm::Control, 77.8, None))
            .collect();
        let t = summarize(&Dataset::new(vec!["age".into()], recs), true).unwrap();
        let m = t.row(Group::HistoricalControl).unwrap().covariates[0].unwrap();
        assert_eq!(m.mean, 77.8);
        assert_eq!(m.sd, Some(0.0));
    }

    #[test]
    fn two_point_group_sd_is_sqrt_two() {
        let d = Dataset::new(
            vec!["x".into()],
            vec![
                rec("a", Study::Current, Arm::Control, 0.0, Some(0.0)),
                rec("b", Study::Current, Arm::Control, 0.0, Some(2.0)),
            ],
        );
        let t = summarize(&d, false).unwrap();
        let y = t.row(Group::CurrentControl).unwrap().outcome.unwrap();
        assert_eq!(y.mean, 1.0);
        assert!((y.sd.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_group_reports_absent_statistics() {
        let d = five().filtered(|r| r.is_current());
        let t = summarize(&d, false).unwrap();
        let h = t.row(Group::HistoricalControl).unwrap();
        assert_eq!(h.count, 0);
        assert!(h.covariates[0].is_none());
        assert!(h.outcome.is_none());
    }

    #[test]
    fn counts_sum_to_totals() {
        let d = five();
        let t = summarize(&d, false).unwrap();
        let c = |g| t.row(g).unwrap().count;
        assert_eq!(
            c(Group::CurrentControl) + c(Group::CurrentTreated),
            c(Group::CurrentTotal)
        );
        assert_eq!(c(Group::HistoricalControl) + c(Group::CurrentTotal), d.len());
    }

    #[test]
    fn masked_summary_ignores_arms() {
        let d = five();
        let open = summarize(&d, true).unwrap();
        let hidden = summarize(&d.masked_arms(), true).unwrap();
        assert_eq!(open, hidden);
        assert_eq!(hidden.rows.len(), 2);
        let y = hidden.row(Group::CurrentTotal).unwrap().outcome.unwrap();
        assert!((y.mean - 31.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unmasked_summary_rejects_masked_arms() {
        assert!(matches!(
            summarize(&five().masked_arms(), false),
            Err(Error::MaskedArm(_))
        ));
    }

    #[test]
    fn design_validation() {
        assert!(DesignParams::default().validate().is_ok());
        let bad = DesignParams {
            alpha: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = DesignParams {
            alloc_ratio: AllocationRatio { treated: 0, control: 1 },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
