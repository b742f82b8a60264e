//! Data-parallel SGD programs written against GET/INC/CLOCK.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::RowKey;

pub mod lsq;
pub mod mf;
pub mod oracle;

pub use lsq::{lsq_sgd_step, LsqConfig, LsqWorkload};
pub use mf::{mf_objective, mf_sgd_step, planted_mf, MfConfig, MfWorkload, PlantedMf, SparseMatrix};
pub use oracle::{is_diverged, sequential_oracle, tune_eta, tune_eta_by, OracleRun, DIVERGENCE_FACTOR};

/// Parameter state keyed by row.
pub type Params = BTreeMap<RowKey, Vec<f64>>;

/// Result of one SGD step on one data item.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Deltas for the step's rows, in the order of `rows_of`.
    pub deltas: Vec<(RowKey, Vec<f64>)>,
    /// Per-item loss at the view the step read.
    pub loss: f64,
    /// l2 norm of the per-item gradient at that view.
    pub grad_norm: f64,
}

/// How many items each worker processes per clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Minibatch {
    /// Fraction of the worker's shard, at least one item.
    Fraction(f64),
    Count(usize),
}

impl Minibatch {
    pub fn items(&self, shard_len: usize) -> Result<usize> {
        match *self {
            Minibatch::Fraction(f) if f > 0.0 && f <= 1.0 => Ok(((shard_len as f64 * f).round() as usize).max(1)),
            Minibatch::Fraction(f) => Err(Error::Config(format!("minibatch fraction must be in (0, 1], got {f}"))),
            Minibatch::Count(0) => Err(Error::Config("minibatch count must be >= 1".into())),
            Minibatch::Count(n) => Ok(n),
        }
    }
}

/// A workload the engine and the sequential oracle can both drive.
pub trait Workload: Send + Sync {
    fn name(&self) -> &'static str;

    /// Width of every row in the table.
    fn width(&self) -> usize;

    /// `x0`: the agreed-upon initial state.
    fn initial_params(&self) -> Params;

    /// Items each worker processes per clock (identical for all workers).
    fn items_per_clock(&self, workers: usize) -> Result<usize>;

    /// Item indices worker `worker` visits during `clock`, in visit order.
    fn schedule(&self, worker: usize, clock: u64, workers: usize) -> Result<Vec<usize>>;

    /// Rows read (and written) by a step on `item`.
    fn rows_of(&self, item: usize) -> Vec<RowKey>;

    /// One SGD step. `t` is the 1-based global step index; `views` are the
    /// values read for `rows_of(item)`, in the same order.
    fn step(&self, item: usize, t: u64, views: &[Vec<f64>]) -> Result<StepOutput>;

    /// Step size used at global step index `t`.
    fn step_size_at(&self, t: u64) -> Result<f64>;

    /// (objective, squared loss) at `x`.
    fn objective(&self, x: &Params) -> Result<(f64, f64)>;

    /// For convex workloads: the component `f_item(x) = 0.5 (a.x - b)^2`.
    fn component(&self, _item: usize) -> Option<(&[f64], f64)> {
        None
    }
}

/// Per-(worker, clock) record of what was read and written.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSnapshot {
    /// Clock-major index `clock * P + worker`.
    pub t: u64,
    pub worker: usize,
    pub clock: u64,
    /// Virtual time at which the clock's batch was sent.
    pub time: u64,
    /// First value read for each row during the clock.
    pub x_tilde: Params,
    /// Reference sequence on the same rows, filled in after the run.
    pub x_ref: Params,
    /// The clock's coalesced update.
    pub update: Params,
    pub items: Vec<usize>,
    /// Sum of per-item losses at the views the steps read.
    pub loss: f64,
    pub grad_norm: f64,
}

impl TraceSnapshot {
    pub fn new(t: u64, worker: usize, clock: u64) -> Self {
        TraceSnapshot {
            t,
            worker,
            clock,
            time: 0,
            x_tilde: Params::new(),
            x_ref: Params::new(),
            update: Params::new(),
            items: Vec::new(),
            loss: 0.0,
            grad_norm: 0.0,
        }
    }

    pub fn record_step(&mut self, item: usize, rows: &[RowKey], views: &[Vec<f64>], out: &StepOutput) {
        for (r, v) in rows.iter().zip(views) {
            self.x_tilde.entry(*r).or_insert_with(|| v.clone());
        }
        self.items.push(item);
        self.loss += out.loss;
        self.grad_norm = self.grad_norm.max(out.grad_norm);
    }
}

/// Fills `x_ref` on every snapshot: `x_t = x0 + sum of u_t' for t' < t` in
/// clock-major order, restricted to the rows the snapshot read. Snapshots
/// are sorted by `t` first.
pub fn attach_reference(trace: &mut [TraceSnapshot], x0: &Params) {
    trace.sort_by_key(|s| s.t);
    let mut x = x0.clone();
    for snap in trace.iter_mut() {
        snap.x_ref = snap
            .x_tilde
            .keys()
            .map(|r| (*r, x.get(r).cloned().unwrap_or_else(|| vec![0.0; snap.x_tilde[r].len()])))
            .collect();
        for (r, d) in &snap.update {
            let row = x.entry(*r).or_insert_with(|| vec![0.0; d.len()]);
            for (a, v) in row.iter_mut().zip(d) {
                *a += v;
            }
        }
    }
}

/// Round-robin assignment of item indices `0..n` to `workers` shards.
pub fn partition_indices(n: usize, workers: usize) -> Result<Vec<Vec<usize>>> {
    if workers == 0 {
        return Err(Error::NoWorkers);
    }
    let mut shards = vec![Vec::with_capacity(n / workers + 1); workers];
    for i in 0..n {
        shards[i % workers].push(i);
    }
    Ok(shards)
}

/// Round-robin partition of a data set by entry index.
pub fn partition_data<T: Clone>(items: &[T], workers: usize) -> Result<Vec<Vec<T>>> {
    Ok(partition_indices(items.len(), workers)?
        .into_iter()
        .map(|idx| idx.into_iter().map(|i| items[i].clone()).collect())
        .collect())
}

/// Runs `workload` on the simulated parameter server.
pub fn run_workload(workload: &dyn Workload, config: &crate::sim::RunConfig) -> Result<crate::sim::RunOutput> {
    crate::sim::run(workload, config)
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
