//! Renders the standard CSV set and headline numbers for a finished run.

use std::collections::BTreeMap;
use std::io::Write;

use super::csv;
use super::{
    decomposition_series, gamma_bound_check, log_spaced, regret_series, regret_slope, staleness_histogram,
    time_breakdown_report, variance_series, GammaBoundReport,
};
use crate::error::{Error, Result};
use crate::sim::{RunConfig, RunOutput};
use crate::workloads::{TraceSnapshot, Workload};

pub const CSV_FILES: [&str; 6] =
    ["staleness.csv", "objective.csv", "regret.csv", "gamma.csv", "variance.csv", "breakdown.csv"];

/// Headline numbers of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub final_objective: f64,
    pub final_squared_loss: f64,
    pub diverged: bool,
    pub gamma_bound: Option<GammaBoundReport>,
    pub regret_slope: Option<f64>,
    pub mean_differential: Option<f64>,
    pub variance_decreasing_fraction: Option<f64>,
}

/// Everything derived from one configuration's replicas: file name -> bytes,
/// plus the summary of the first replica.
#[derive(Debug, Clone)]
pub struct Report {
    pub files: BTreeMap<&'static str, Vec<u8>>,
    pub summary: RunSummary,
}

/// Checkpoints for the regret curve, eight per decade from 10 steps.
pub fn regret_checkpoints(total_steps: u64) -> Vec<u64> {
    if total_steps < 10 {
        return (1..=total_steps).collect();
    }
    log_spaced(10, total_steps, 8)
}

pub fn build_report(runs: &[RunOutput], workload: &dyn Workload, cfg: &RunConfig) -> Result<Report> {
    let run = runs.first().ok_or(Error::Empty("runs"))?;
    let model = cfg.consistency.model;
    let mut files = BTreeMap::new();

    let mut buf = Vec::new();
    let mean_differential = if run.metrics.reads.is_empty() {
        writeln!(buf, "differential,count,normalized")?;
        None
    } else {
        let h = staleness_histogram(&run.metrics.reads, model.staleness())?;
        csv::write_staleness(&mut buf, &h)?;
        Some(h.mean())
    };
    files.insert("staleness.csv", buf);

    let mut buf = Vec::new();
    csv::write_objective(&mut buf, &run.metrics.objective)?;
    files.insert("objective.csv", buf);

    let total_steps: u64 = run.trace.iter().map(|s| s.items.len() as u64).sum();
    let mut buf = Vec::new();
    let regret = if !run.trace.is_empty() && workload.component(0).is_some() {
        let series = regret_series(&run.trace, workload, &regret_checkpoints(total_steps))?;
        csv::write_regret(&mut buf, &series)?;
        regret_slope(&series, 100.min(total_steps), 100_000).ok()
    } else {
        csv::write_regret(&mut buf, &[])?;
        None
    };
    files.insert("regret.csv", buf);

    let mut buf = Vec::new();
    let gamma_bound = match model.staleness() {
        Some(s) if !run.trace.is_empty() => {
            let series = decomposition_series(&run.trace, cfg.workers, s)?;
            let report = gamma_bound_check(&run.trace, &series, workload, cfg.workers, s)?;
            csv::write_gamma(&mut buf, &series, report.bound)?;
            Some(report)
        }
        _ => {
            csv::write_gamma(&mut buf, &[], 0.0)?;
            None
        }
    };
    files.insert("gamma.csv", buf);

    let mut buf = Vec::new();
    let same_length = runs.iter().all(|r| r.trace.len() == run.trace.len());
    let variance = if runs.len() >= 2 && same_length && !run.trace.is_empty() {
        let traces: Vec<&[TraceSnapshot]> = runs.iter().map(|r| r.trace.as_slice()).collect();
        let v = variance_series(&traces)?;
        csv::write_variance(&mut buf, &v)?;
        Some(v.decreasing_fraction)
    } else {
        writeln!(buf, "t,var_t")?;
        None
    };
    files.insert("variance.csv", buf);

    let mut buf = Vec::new();
    let rows: Vec<_> = runs.iter().map(|r| time_breakdown_report(&r.metrics.breakdown, &model)).collect();
    csv::write_breakdown(&mut buf, &rows)?;
    files.insert("breakdown.csv", buf);

    let last = run.metrics.objective.last().ok_or(Error::Empty("objective points"))?;
    Ok(Report {
        files,
        summary: RunSummary {
            final_objective: last.objective,
            final_squared_loss: last.squared_loss,
            diverged: run.diverged,
            gamma_bound,
            regret_slope: regret,
            mean_differential,
            variance_decreasing_fraction: variance,
        },
    })
}
