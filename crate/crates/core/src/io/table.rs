//! Result tables with fixed column sets, rendered as CSV or as
//! aligned-column markdown.

use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::inference::TestResult;
use crate::model::{Dataset, Study, SummaryTable};
use crate::propensity::{FiveNumber, WeightSet};
use crate::sim::{AnalysisArm, MetricsTable};
use crate::ssr::SsrResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Markdown,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            other => Err(Error::Config(format!("unknown output format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_markdown(&self) -> String {
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|j| {
                self.rows
                    .iter()
                    .map(|r| r[j].chars().count())
                    .chain([self.columns[j].chars().count(), 3])
                    .max()
                    .unwrap_or(3)
            })
            .collect();
        let line = |cells: &[String]| {
            let body: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| format!("{c:>w$}")).collect();
            format!("| {} |\n", body.join(" | "))
        };
        let mut out = line(&self.columns);
        let rule: Vec<String> = widths.iter().map(|&w| format!("{}:", "-".repeat(w - 1))).collect();
        out.push_str(&format!("| {} |\n", rule.join(" | ")));
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }

    pub fn write<W: Write>(&self, format: OutputFormat, mut writer: W) -> Result<()> {
        match format {
            OutputFormat::Csv => self.write_csv(writer),
            OutputFormat::Markdown => {
                writer.write_all(self.to_markdown().as_bytes())?;
                Ok(())
            }
        }
    }
}

fn fixed(v: f64, dp: usize) -> String {
    if v.is_finite() {
        format!("{v:.dp$}")
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>, dp: usize) -> String {
    v.map(|v| fixed(v, dp)).unwrap_or_default()
}

pub const METRICS_COLUMNS: [&str; 23] = [
    "scenario",
    "label",
    "treatment_effect",
    "reps",
    "strategy1",
    "strategy2",
    "no_ssr",
    "no_ad1",
    "no_ad2",
    "mean_ss",
    "mean_ssr1",
    "mean_ssr2",
    "se_strategy1",
    "se_strategy2",
    "se_no_ssr",
    "se_no_ad1",
    "se_no_ad2",
    "se_ss",
    "se_ssr1",
    "se_ssr2",
    "truncations",
    "failures",
    "ssr_fallbacks",
];

/// Rejection rates (x100) in the five analysis columns, then mean sizes,
/// then Monte Carlo standard errors.
pub fn metrics_table(m: &MetricsTable) -> Table {
    let mut t = Table::new(&METRICS_COLUMNS);
    for r in &m.rows {
        let mut row = vec![
            r.scenario_id.to_string(),
            r.label.clone(),
            r.treatment_effect.to_string(),
            r.reps.to_string(),
        ];
        row.extend(AnalysisArm::ALL.iter().map(|&a| fixed(r.rate_of(a), 2)));
        row.extend(
            [r.mean_initial_n, r.mean_ssr1_n, r.mean_ssr2_n]
                .iter()
                .map(|&v| fixed(v, 1)),
        );
        row.extend(r.rate_se.iter().map(|&v| fixed(v, 2)));
        row.extend(r.size_se.iter().map(|&v| fixed(v, 2)));
        row.push(r.truncations.to_string());
        row.push(r.failures.to_string());
        row.push(r.ssr_fallbacks.to_string());
        t.push(row);
    }
    t
}

pub const SSR_COLUMNS: [&str; 12] = [
    "strategy",
    "n_hat",
    "n_raw",
    "s1_sq",
    "sigma1_hat_sq",
    "sigma0_hat_sq",
    "inflation_current",
    "inflation_historical",
    "k",
    "alpha",
    "power",
    "delta",
];

pub fn ssr_table(results: &[SsrResult]) -> Table {
    let mut t = Table::new(&SSR_COLUMNS);
    for r in results {
        t.push(vec![
            r.strategy.number().to_string(),
            r.n_hat.to_string(),
            fixed(r.n_raw, 4),
            opt(r.s1_sq, 4),
            opt(r.sigma1_hat_sq, 4),
            opt(r.sigma0_hat_sq, 4),
            opt(r.inflation.map(|p| p.0), 6),
            opt(r.inflation.map(|p| p.1), 6),
            opt(r.k, 6),
            r.alpha.to_string(),
            r.power.to_string(),
            r.delta.to_string(),
        ]);
    }
    t
}

pub const TEST_COLUMNS: [&str; 9] = [
    "method",
    "theta1_hat",
    "theta0_hat",
    "sigma_star_sq",
    "statistic",
    "p_value",
    "reject",
    "n_used",
    "df",
];

pub fn test_table(results: &[(&str, TestResult)]) -> Table {
    let mut t = Table::new(&TEST_COLUMNS);
    for (method, r) in results {
        t.push(vec![
            method.to_string(),
            fixed(r.theta1_hat, 5),
            fixed(r.theta0_hat, 5),
            fixed(r.sigma_star_sq, 5),
            fixed(r.statistic, 5),
            format!("{:.4e}", r.p_value),
            r.reject.to_string(),
            r.n_used.to_string(),
            r.df.map(|d| d.to_string()).unwrap_or_default(),
        ]);
    }
    t
}

pub const WEIGHTS_COLUMNS: [&str; 5] = ["id", "study", "e", "w_r1", "w_r0"];

/// Per-subject propensities and weights at full precision.
pub fn weights_table(data: &Dataset, w: &WeightSet) -> Table {
    let mut t = Table::new(&WEIGHTS_COLUMNS);
    for (i, r) in data.records.iter().enumerate() {
        t.push(vec![
            r.id.clone(),
            (r.study.indicator() as u8).to_string(),
            w.e[i].to_string(),
            w.w_r1[i].to_string(),
            w.w_r0[i].to_string(),
        ]);
    }
    t
}

pub const WEIGHTS_SUMMARY_COLUMNS: [&str; 8] = ["quantity", "study", "n", "min", "q1", "median", "q3", "max"];

/// Five-number summaries of `e` and `w_r0` per source, enough to redraw
/// box plots.
pub fn weights_summary_table(data: &Dataset, w: &WeightSet) -> Table {
    let mut t = Table::new(&WEIGHTS_SUMMARY_COLUMNS);
    for (name, values) in [("e", &w.e), ("w_r0", &w.w_r0)] {
        for study in [Study::Current, Study::Historical] {
            let v: Vec<f64> = data
                .records
                .iter()
                .zip(values.iter())
                .filter(|(r, _)| r.study == study)
                .map(|(_, &x)| x)
                .collect();
            let mut row = vec![
                name.to_string(),
                (study.indicator() as u8).to_string(),
                v.len().to_string(),
            ];
            match FiveNumber::of(&v) {
                Some(f) => row.extend([f.min, f.q1, f.median, f.q3, f.max].iter().map(|&x| fixed(x, 6))),
                None => row.extend(std::iter::repeat_n(String::new(), 5)),
            }
            t.push(row);
        }
    }
    t
}

/// One row per group: count, then mean and SD of each covariate and of y.
pub fn summary_table(s: &SummaryTable) -> Table {
    let mut cols = vec!["group".to_string(), "n".to_string()];
    for name in s.covariate_names.iter().chain(std::iter::once(&"y".to_string())) {
        cols.push(format!("{name}_mean"));
        cols.push(format!("{name}_sd"));
    }
    let mut t = Table::new(&cols);
    for g in &s.rows {
        let mut row = vec![g.group.label().to_string(), g.count.to_string()];
        for m in g.covariates.iter().chain(std::iter::once(&g.outcome)) {
            row.push(opt(m.map(|m| m.mean), 3));
            row.push(opt(m.and_then(|m| m.sd), 3));
        }
        t.push(row);
    }
    t
}
