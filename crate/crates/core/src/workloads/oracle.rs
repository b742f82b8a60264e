//! Single-threaded reference execution with zero staleness.

use std::collections::BTreeMap;

use super::{Params, TraceSnapshot, Workload};
use crate::coalesce::{coalesce, coalesce_row};
use crate::error::{Error, Result};
use crate::types::{add_into, RowKey, Update};

/// Objective above `factor * initial` (or non-finite) counts as divergence.
pub fn is_diverged(objective: f64, initial: f64, factor: f64) -> bool {
    !objective.is_finite() || objective > factor * initial.max(f64::MIN_POSITIVE)
}

pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone)]
pub struct OracleRun {
    pub trace: Vec<TraceSnapshot>,
    pub final_params: Params,
    pub initial_objective: f64,
    /// `(clocks completed, objective, squared loss)` after every clock.
    pub objective: Vec<(u64, f64, f64)>,
    pub diverged: bool,
}

fn view(x: &Params, buffer: &BTreeMap<RowKey, Vec<Vec<f64>>>, row: RowKey, width: usize) -> Result<Vec<f64>> {
    let mut v = x.get(&row).cloned().unwrap_or_else(|| vec![0.0; width]);
    if let Some(b) = buffer.get(&row) {
        let refs: Vec<&[f64]> = b.iter().map(|d| d.as_slice()).collect();
        add_into(row, &mut v, &coalesce_row(row, &refs)?)?;
    }
    Ok(v)
}

/// Runs the workload's update rule in clock-major order: worker `p`'s clock
/// `c` sees everything from `(c, p' < p)` and earlier clocks, plus its own
/// buffered increments from the current clock. Each clock's increments are
/// coalesced and applied exactly as the server would apply the batch.
pub fn sequential_oracle(workload: &dyn Workload, workers: usize, clocks: u64) -> Result<OracleRun> {
    if workers == 0 {
        return Err(Error::NoWorkers);
    }
    let width = workload.width();
    let m = workload.items_per_clock(workers)? as u64;
    let mut x = workload.initial_params();
    let (initial_objective, _) = workload.objective(&x)?;
    let mut trace = Vec::with_capacity((clocks as usize).saturating_mul(workers));
    let mut objective = Vec::with_capacity(clocks as usize);
    let mut diverged = false;
    'clocks: for c in 0..clocks {
        for p in 0..workers {
            let t0 = c * workers as u64 + p as u64;
            let mut snap = TraceSnapshot::new(t0, p, c);
            let mut buffer: BTreeMap<RowKey, Vec<Vec<f64>>> = BTreeMap::new();
            for (i, item) in workload.schedule(p, c, workers)?.into_iter().enumerate() {
                let rows = workload.rows_of(item);
                let views: Vec<Vec<f64>> = rows.iter().map(|r| view(&x, &buffer, *r, width)).collect::<Result<_>>()?;
                let out = workload.step(item, t0 * m + i as u64 + 1, &views)?;
                snap.record_step(item, &rows, &views, &out);
                for (r, d) in out.deltas {
                    buffer.entry(r).or_default().push(d);
                }
            }
            let raw: Vec<Update> =
                buffer.into_iter().flat_map(|(r, ds)| ds.into_iter().map(move |d| Update::new(p, c, r, d))).collect();
            for u in coalesce(&raw)? {
                let row = x.entry(u.row).or_insert_with(|| vec![0.0; width]);
                add_into(u.row, row, &u.delta)?;
                snap.update.insert(u.row, u.delta);
            }
            trace.push(snap);
        }
        let (obj, sq) = workload.objective(&x)?;
        objective.push((c + 1, obj, sq));
        if is_diverged(obj, initial_objective, DIVERGENCE_FACTOR) {
            diverged = true;
            break 'clocks;
        }
    }
    Ok(OracleRun { trace, final_params: x, initial_objective, objective, diverged })
}

/// Picks the largest step size in `grid` whose zero-staleness run converges
/// (no divergence and a final objective below the initial one).
pub fn tune_eta<W: Workload>(build: impl Fn(f64) -> W, grid: &[f64], workers: usize, clocks: u64) -> Result<f64> {
    tune_eta_by(grid, |eta| {
        let run = sequential_oracle(&build(eta), workers, clocks)?;
        let last = run.objective.last().map(|o| o.1).unwrap_or(run.initial_objective);
        Ok(!run.diverged && last.is_finite() && last < run.initial_objective)
    })
}

/// Largest step size in `grid` for which `converges` holds, trying the
/// largest first.
pub fn tune_eta_by(grid: &[f64], mut converges: impl FnMut(f64) -> Result<bool>) -> Result<f64> {
    let mut sorted: Vec<f64> = grid.iter().copied().filter(|e| *e > 0.0).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for eta in sorted {
        if converges(eta)? {
            return Ok(eta);
        }
    }
    Err(Error::Config("no step size in the grid converges".into()))
}
