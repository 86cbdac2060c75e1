//! Command-line front end: `simulate`, `ssr`, `test`, `weights`,
//! `summarize`.
//!
//! Diagnostics go to standard error as `E:<code>: <message>`. Exit status
//! is 0 on success, 1 for invalid input or usage, 2 for numerical failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::inference::{ipw_test_with, t_test_unadjusted, IpwOptions};
use crate::io::table::{self, OutputFormat, Table};
use crate::io::{load_config, load_dataset, load_propensities};
use crate::model::{summarize, Dataset, DesignParams};
use crate::propensity::{compute_weights, fit_propensity, FitOptions, Propensities, WeightSet};
use crate::sim::run_study_sim;
use crate::ssr::{ssr_strategy1, ssr_strategy2};

#[derive(Debug, Parser)]
#[command(
    name = "hybridssr",
    version,
    about = "Blinded sample size re-estimation and IPW analysis for hybrid-control trials"
)]
struct Cli {
    /// Output format for result tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyChoice {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the simulation study and write the metrics table.
    Simulate {
        /// Flat JSON config; every key is optional.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replications per scenario (overrides sim.reps).
        #[arg(long)]
        reps: Option<u64>,
        /// Master seed.
        #[arg(long, required = true)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-estimate the per-group sample size from an interim dataset.
    Ssr {
        #[arg(long)]
        data: PathBuf,
        /// Config file holding design.* keys.
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = StrategyChoice::Both)]
        strategy: StrategyChoice,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// IPW test of the treatment effect on a final dataset.
    Test {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        design: Option<PathBuf>,
        /// Null difference (overrides design.tau0).
        #[arg(long, allow_hyphen_values = true)]
        tau0: Option<f64>,
        /// CSV with `id` and `e` columns; the propensity model is fitted
        /// when absent.
        #[arg(long)]
        propensities: Option<PathBuf>,
        /// Divide the control estimate by the realized weight mass.
        #[arg(long)]
        normalize: bool,
        /// Also report the unweighted pooled t-test.
        #[arg(long)]
        unadjusted: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the propensity model and write per-subject weights.
    Weights {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the quantile summary (standard output if absent).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Baseline summary by group.
    Summarize {
        #[arg(long)]
        data: PathBuf,
        /// Pool the current study without reading arm labels.
        #[arg(long)]
        masked: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs the CLI against the process streams and returns the exit code.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// As [`run_cli`] with explicit output streams.
pub fn run_cli_with<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    // One line: the message and its detail lines, without
                    // the usage block and help hint.
                    let msg = e.render().to_string();
                    let text: Vec<&str> = msg
                        .lines()
                        .map(str::trim)
                        .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more"))
                        .filter(|l| !l.is_empty())
                        .collect();
                    let text = text.join(" ");
                    let text = text.strip_prefix("error: ").unwrap_or(&text);
                    let _ = writeln!(stderr, "E:usage: {text}");
                    1
                }
            };
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "E:{}: {e}", e.code());
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn emit(t: &Table, format: OutputFormat, out: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            t.write(format, &mut w)?;
            w.flush()?;
            Ok(())
        }
        None => t.write(format, stdout),
    }
}

fn design_from(path: Option<&Path>) -> Result<DesignParams> {
    match path {
        Some(p) => load_config(p)?.design(),
        None => Ok(DesignParams::default()),
    }
}

fn fitted_weights(data: &Dataset) -> Result<WeightSet> {
    let model = fit_propensity(data, &FitOptions::default())?;
    compute_weights(data, Propensities::Model(&model))
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let format = match cli.format {
        Format::Csv => OutputFormat::Csv,
        Format::Markdown => OutputFormat::Markdown,
    };
    match cli.command {
        Command::Simulate {
            config,
            reps,
            seed,
            out,
        } => {
            let file = match &config {
                Some(p) => load_config(p)?,
                None => Default::default(),
            };
            let mut sim = file.sim_config(Some(seed))?;
            if let Some(r) = reps {
                sim.reps = r;
            }
            let metrics = run_study_sim(&sim)?;
            emit(&table::metrics_table(&metrics), format, out.as_deref(), stdout)
        }
        Command::Ssr {
            data,
            design,
            strategy,
            out,
        } => {
            let design = design_from(design.as_deref())?;
            let interim = load_dataset(&data)?;
            let w = fitted_weights(&interim)?;
            let mut results = Vec::new();
            if matches!(strategy, StrategyChoice::One | StrategyChoice::Both) {
                results.push(ssr_strategy1(&interim, &w, &design)?);
            }
            if matches!(strategy, StrategyChoice::Two | StrategyChoice::Both) {
                results.push(ssr_strategy2(&interim, &w, &design)?);
            }
            emit(&table::ssr_table(&results), format, out.as_deref(), stdout)
        }
        Command::Test {
            data,
            design,
            tau0,
            propensities,
            normalize,
            unadjusted,
            out,
        } => {
            let mut design = design_from(design.as_deref())?;
            if let Some(t) = tau0 {
                if !t.is_finite() {
                    return Err(Error::InvalidParameter("tau0 must be finite".into()));
                }
                design.tau0 = t;
            }
            let final_set = load_dataset(&data)?;
            let w = match &propensities {
                Some(p) => {
                    let e = load_propensities(p, &final_set)?;
                    compute_weights(&final_set, Propensities::Fixed(&e))?
                }
                None => fitted_weights(&final_set)?,
            };
            let opts = IpwOptions {
                normalize_control: normalize,
            };
            let mut results = vec![("ipw", ipw_test_with(&final_set, &w, &design, opts)?)];
            if unadjusted {
                results.push(("t_test", t_test_unadjusted(&final_set, &design)?));
            }
            emit(&table::test_table(&results), format, out.as_deref(), stdout)
        }
        Command::Weights { data, out, summary } => {
            let d = load_dataset(&data)?;
            let w = fitted_weights(&d)?;
            emit(&table::weights_table(&d, &w), OutputFormat::Csv, Some(&out), stdout)?;
            emit(
                &table::weights_summary_table(&d, &w),
                format,
                summary.as_deref(),
                stdout,
            )
        }
        Command::Summarize { data, masked, out } => {
            let d = load_dataset(&data)?;
            let s = summarize(&d, masked)?;
            emit(&table::summary_table(&s), format, out.as_deref(), stdout)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("hybridssr").chain(args.iter().copied());
        let code = run_cli_with(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_one() {
        let (code, _, err) = run(&["frobnicate"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("E:usage:"), "{err}");
        let (code, _, err) = run(&["simulate", "--reps", "1"]);
        assert_eq!(code, 1);
        assert!(err.contains("--seed"), "{err}");
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, 0);
        for sub in ["simulate", "ssr", "test", "weights", "summarize"] {
            assert!(out.contains(sub), "{sub}");
        }
    }

    #[test]
    fn missing_file_is_an_input_error() {
        let (code, _, err) = run(&["summarize", "--data", "/nonexistent/file.csv"]);
        assert_eq!(code, 1);
        assert!(err.starts_with("E:io:"), "{err}");
    }
}
