//! Run instrumentation and offline checks of the consistency guarantees.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::client::ClientStats;
use crate::error::{Error, Result};
use crate::server::{ApplyRecord, CoordinatorStats, ShardStats, VapRecord};
use crate::types::{ConsistencyModel, RowKey};
use crate::workloads::{Params, TraceSnapshot, Workload};

pub mod csv;
pub mod report;

pub use report::{build_report, Report, RunSummary, CSV_FILES};

/// One successful GET.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadStalenessSample {
    pub worker: usize,
    pub c_worker: u64,
    pub c_param: u64,
    /// `(c_param - 1) - c_worker`; -1 is a perfectly fresh read.
    pub differential: i64,
    pub row: RowKey,
    pub shard: usize,
    /// Shard version of the copy that served the read.
    pub version: u64,
}

impl ReadStalenessSample {
    pub fn new(worker: usize, c_worker: u64, c_param: u64, row: RowKey, shard: usize, version: u64) -> Self {
        ReadStalenessSample {
            worker,
            c_worker,
            c_param,
            differential: c_param as i64 - 1 - c_worker as i64,
            row,
            shard,
            version,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectivePoint {
    /// Table clock (clocks completed by every worker).
    pub clock: u64,
    pub time: u64,
    pub objective: f64,
    pub squared_loss: f64,
}

/// Virtual time one worker spent on one clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeBreakdown {
    pub worker: usize,
    pub clock: u64,
    pub compute_ticks: u64,
    pub wait_ticks: u64,
}

#[derive(Debug, Clone, Default)]
pub struct MetricsLog {
    pub reads: Vec<ReadStalenessSample>,
    pub objective: Vec<ObjectivePoint>,
    pub breakdown: Vec<TimeBreakdown>,
    pub apply_log: Vec<ApplyRecord>,
    pub shard_stats: Vec<ShardStats>,
    pub client_stats: Vec<ClientStats>,
    pub coordinator: Option<CoordinatorStats>,
    pub messages: u64,
    pub end_time: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramBin {
    pub differential: i64,
    pub count: u64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bins: Vec<HistogramBin>,
    pub total: u64,
}

impl Histogram {
    pub fn mean(&self) -> f64 {
        self.bins.iter().map(|b| b.differential as f64 * b.count as f64).sum::<f64>() / self.total as f64
    }

    pub fn is_point_mass_at(&self, d: i64) -> bool {
        self.bins.iter().all(|b| (b.differential == d) == (b.count == self.total))
    }
}

/// Normalized differential counts. Bins run from `-s-1` (when a staleness is
/// given) or the minimum observed, up to the maximum observed.
pub fn staleness_histogram(samples: &[ReadStalenessSample], staleness: Option<u64>) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::Empty("staleness samples"));
    }
    let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.differential).or_default() += 1;
    }
    let observed_min = *counts.keys().next().expect("non-empty");
    let max = *counts.keys().next_back().expect("non-empty");
    let min = staleness.map_or(observed_min, |s| observed_min.min(-(s as i64) - 1));
    let total = samples.len() as u64;
    let bins = (min..=max)
        .map(|d| {
            let count = counts.get(&d).copied().unwrap_or(0);
            HistogramBin { differential: d, count, normalized: count as f64 / total as f64 }
        })
        .collect();
    Ok(Histogram { bins, total })
}

pub fn mean_differential(samples: &[ReadStalenessSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("staleness samples"));
    }
    Ok(samples.iter().map(|s| s.differential as f64).sum::<f64>() / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyReport {
    pub checked: u64,
    pub violations: u64,
    pub first_violation: Option<ReadStalenessSample>,
}

/// Checks every read at worker clock `c` against the shard's application log:
/// the copy it was served from must include every batch from every worker
/// generated at clocks `<= c - s - 1`.
pub fn ssp_safety_audit(
    reads: &[ReadStalenessSample],
    apply_log: &[ApplyRecord],
    workers: usize,
    staleness: u64,
) -> SafetyReport {
    // per shard: (worker, clock) -> version at which it was applied
    let mut applied: BTreeMap<usize, BTreeMap<(u64, usize), u64>> = BTreeMap::new();
    for r in apply_log {
        applied.entry(r.shard).or_default().insert((r.clock, r.worker), r.version);
    }
    // per shard: required[c] = version by which all clocks <= c were applied
    let required: BTreeMap<usize, Vec<u64>> = applied
        .iter()
        .map(|(shard, log)| {
            let max_clock = log.keys().map(|(c, _)| *c).max().unwrap_or(0);
            let mut req = Vec::with_capacity(max_clock as usize + 1);
            let mut acc = 0u64;
            for c in 0..=max_clock {
                for w in 0..workers {
                    acc = match log.get(&(c, w)) {
                        Some(v) if acc != u64::MAX => acc.max(*v),
                        _ => u64::MAX,
                    };
                }
                req.push(acc);
            }
            (*shard, req)
        })
        .collect();
    let mut report = SafetyReport { checked: 0, violations: 0, first_violation: None };
    for r in reads {
        report.checked += 1;
        if r.c_worker < staleness + 1 {
            continue;
        }
        let need_clock = (r.c_worker - staleness - 1) as usize;
        let ok = required
            .get(&r.shard)
            .and_then(|req| req.get(need_clock))
            .is_some_and(|need| *need != u64::MAX && r.version >= *need);
        if !ok {
            report.violations += 1;
            report.first_violation.get_or_insert(*r);
        }
    }
    report
}

/// Log-spaced integers in `[lo, hi]`, `per_decade` per factor of ten.
pub fn log_spaced(lo: u64, hi: u64, per_decade: usize) -> Vec<u64> {
    if lo == 0 || hi < lo || per_decade == 0 {
        return Vec::new();
    }
    let (a, b) = ((lo as f64).log10(), (hi as f64).log10());
    let n = ((b - a) * per_decade as f64).ceil() as usize;
    let mut out: Vec<u64> = (0..=n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / n.max(1) as f64).round() as u64)
        .map(|v| v.clamp(lo, hi))
        .collect();
    out.dedup();
    out
}

/// `(T, R[X]/T)` at each checkpoint, where `R[X] = sum_{k<=T} f_k(x~_k) -
/// min_x sum_{k<=T} f_k(x)`. Checkpoints fall on snapshot boundaries.
pub fn regret_series(trace: &[TraceSnapshot], workload: &dyn Workload, checkpoints: &[u64]) -> Result<Vec<(u64, f64)>> {
    let d = workload.width();
    let mut order: Vec<&TraceSnapshot> = trace.iter().collect();
    order.sort_by_key(|s| s.t);
    let mut ata = DMatrix::<f64>::zeros(d, d);
    let mut atb = DVector::<f64>::zeros(d);
    let mut btb = 0.0;
    let mut loss = 0.0;
    let mut count = 0u64;
    let mut targets = checkpoints.iter().copied().peekable();
    let mut out = Vec::new();
    for snap in order {
        for &item in &snap.items {
            let (a, b) = workload.component(item).ok_or(Error::NoOptimum)?;
            let av = DVector::from_column_slice(a);
            ata.ger(1.0, &av, &av, 1.0);
            atb.axpy(b, &av, 1.0);
            btb += b * b;
        }
        loss += snap.loss;
        count += snap.items.len() as u64;
        while targets.peek().is_some_and(|t| *t <= count) {
            targets.next();
            let best = prefix_minimum(&ata, &atb, btb);
            out.push((count, (loss - best) / count as f64));
        }
    }
    out.dedup_by_key(|p| p.0);
    Ok(out)
}

fn prefix_minimum(ata: &DMatrix<f64>, atb: &DVector<f64>, btb: f64) -> f64 {
    let svd = ata.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-12;
    let x = svd.solve(atb, eps).expect("u and v computed");
    (0.5 * x.dot(&(ata * &x)) - x.dot(atb) + 0.5 * btb).max(0.0)
}

/// Least-squares slope of `ln(R/T)` against `ln T` over `T in [lo, hi]`.
pub fn regret_slope(series: &[(u64, f64)], lo: u64, hi: u64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, r)| *t >= lo && *t <= hi && *r > 0.0)
        .map(|(t, r)| ((*t as f64).ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Empty("regret points in the fit range"));
    }
    Ok(ols_slope(&pts))
}

fn ols_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StalenessDecomposition {
    pub t: u64,
    pub u_bar: f64,
    pub gamma_norm: f64,
    pub window_size: usize,
    /// `|x~_t - x_t|_2`; nonzero with `u_bar = 0` means the decomposition is undefined.
    pub deviation: f64,
}

/// `u_bar = sum of window update norms / (P (2s+1))`, `gamma = |x~ - x| / u_bar`.
pub fn decompose_staleness(
    t: u64,
    x_tilde: &Params,
    x_ref: &Params,
    window_norms: &[f64],
    workers: usize,
    staleness: u64,
) -> Result<StalenessDecomposition> {
    let mut sq = 0.0;
    for (row, v) in x_tilde {
        let r = x_ref.get(row).ok_or_else(|| Error::Shape(format!("reference lacks row {row}")))?;
        if r.len() != v.len() {
            return Err(Error::LengthMismatch { row: *row, expected: r.len(), got: v.len() });
        }
        sq += v.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    let deviation = sq.sqrt();
    let u_bar = window_norms.iter().sum::<f64>() / (workers as f64 * (2 * staleness + 1) as f64);
    let gamma_norm = if u_bar > 0.0 { deviation / u_bar } else { 0.0 };
    Ok(StalenessDecomposition { t, u_bar, gamma_norm, window_size: window_norms.len(), deviation })
}

/// Decomposition of every snapshot of a run. `x_ref` must already be attached.
pub fn decomposition_series(
    trace: &[TraceSnapshot],
    workers: usize,
    staleness: u64,
) -> Result<Vec<StalenessDecomposition>> {
    let mut order: Vec<&TraceSnapshot> = trace.iter().collect();
    order.sort_by_key(|s| s.t);
    let mut norms: BTreeMap<(u64, usize), f64> = BTreeMap::new();
    for s in &order {
        let sq: f64 = s.update.values().flatten().map(|v| v * v).sum();
        norms.insert((s.clock, s.worker), sq.sqrt());
    }
    order
        .iter()
        .map(|s| {
            let lo = s.clock.saturating_sub(staleness);
            // clocks c-s ..= c+s: a worker s clocks ahead may finish clock c+s
            // before this read, so its batch can already be visible
            let hi = s.clock + staleness + 1;
            let window: Vec<f64> = norms.range((lo, 0)..(hi, 0)).map(|(_, n)| *n).collect();
            decompose_staleness(s.t, &s.x_tilde, &s.x_ref, &window, workers, staleness)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaBoundReport {
    pub steps: usize,
    pub bound: f64,
    pub gamma_violations: usize,
    pub ubar_violations: usize,
    /// max gamma / (P (2s+1))
    pub max_gamma_ratio: f64,
    /// max u_bar / (eta_t L)
    pub max_ubar_ratio: f64,
    /// Empirical Lipschitz estimate: max observed gradient norm.
    pub lipschitz: f64,
    pub mu_gamma: f64,
    pub sigma_gamma: f64,
    /// Steps with `u_bar = 0` but a nonzero deviation.
    pub undefined_steps: usize,
    pub gamma_autocorrelation: f64,
}

/// Checks `gamma_t <= P(2s+1)` and `u_bar_t <= eta_t L` (with `1e-9` slack) on every step.
pub fn gamma_bound_check(
    trace: &[TraceSnapshot],
    series: &[StalenessDecomposition],
    workload: &dyn Workload,
    workers: usize,
    staleness: u64,
) -> Result<GammaBoundReport> {
    if series.is_empty() {
        return Err(Error::Empty("decomposition series"));
    }
    let m = workload.items_per_clock(workers)? as u64;
    let bound = (workers as u64 * (2 * staleness + 1)) as f64;
    let lipschitz = trace.iter().map(|s| s.grad_norm).fold(0.0, f64::max);
    let mut report = GammaBoundReport {
        steps: series.len(),
        bound,
        gamma_violations: 0,
        ubar_violations: 0,
        max_gamma_ratio: 0.0,
        max_ubar_ratio: 0.0,
        lipschitz,
        mu_gamma: 0.0,
        sigma_gamma: 0.0,
        undefined_steps: 0,
        gamma_autocorrelation: 0.0,
    };
    for d in series {
        let eta = workload.step_size_at(d.t * m + 1)?;
        if d.gamma_norm > bound + 1e-9 {
            report.gamma_violations += 1;
        }
        if d.u_bar > eta * lipschitz + 1e-9 {
            report.ubar_violations += 1;
        }
        report.max_gamma_ratio = report.max_gamma_ratio.max(d.gamma_norm / bound);
        if eta * lipschitz > 0.0 {
            report.max_ubar_ratio = report.max_ubar_ratio.max(d.u_bar / (eta * lipschitz));
        }
        if d.u_bar == 0.0 && d.deviation > 0.0 {
            report.undefined_steps += 1;
        }
    }
    let g: Vec<f64> = series.iter().map(|d| d.gamma_norm).collect();
    let n = g.len() as f64;
    report.mu_gamma = g.iter().sum::<f64>() / n;
    report.sigma_gamma = g.iter().map(|x| (x - report.mu_gamma).powi(2)).sum::<f64>() / n;
    report.gamma_autocorrelation = lag1_autocorrelation(&g);
    Ok(report)
}

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    if x.len() < 3 {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSeries {
    /// `(t, Var_t)` with `Var_t` the summed component variance of `x~_t` across replicas.
    pub points: Vec<(u64, f64)>,
    pub n_replicas: usize,
    /// Fraction of consecutive pairs in the final quartile with `Var_{t+1} <= Var_t`.
    pub decreasing_fraction: f64,
}

/// Component variance of the noisy views across replicas, per clock-major index.
pub fn variance_series(replicas: &[&[TraceSnapshot]]) -> Result<VarianceSeries> {
    if replicas.len() < 2 {
        return Err(Error::ReplicaMismatch(format!("need at least 2 replicas, got {}", replicas.len())));
    }
    let sorted: Vec<Vec<&TraceSnapshot>> = replicas
        .iter()
        .map(|r| {
            let mut v: Vec<&TraceSnapshot> = r.iter().collect();
            v.sort_by_key(|s| s.t);
            v
        })
        .collect();
    let len = sorted[0].len();
    if let Some(bad) = sorted.iter().find(|r| r.len() != len) {
        return Err(Error::ReplicaMismatch(format!("trace lengths {len} and {}", bad.len())));
    }
    let n = replicas.len() as f64;
    let mut points = Vec::with_capacity(len);
    for k in 0..len {
        let head = sorted[0][k];
        let mut var = 0.0;
        for (row, v0) in &head.x_tilde {
            for i in 0..v0.len() {
                let mut vals = Vec::with_capacity(sorted.len());
                for r in &sorted {
                    let s = r[k];
                    if s.t != head.t {
                        return Err(Error::ReplicaMismatch(format!("index {} vs {}", s.t, head.t)));
                    }
                    let x = s
                        .x_tilde
                        .get(row)
                        .and_then(|v| v.get(i))
                        .ok_or_else(|| Error::ReplicaMismatch(format!("row {row} missing at t = {}", s.t)))?;
                    vals.push(*x);
                }
                let mean = vals.iter().sum::<f64>() / n;
                var += vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            }
        }
        points.push((head.t, var));
    }
    let decreasing_fraction = final_quartile_decreasing(&points);
    Ok(VarianceSeries { points, n_replicas: replicas.len(), decreasing_fraction })
}

/// Fraction of consecutive pairs in the last quarter of `points` that do not increase.
pub fn final_quartile_decreasing(points: &[(u64, f64)]) -> f64 {
    let start = points.len() * 3 / 4;
    let tail = &points[start..];
    if tail.len() < 2 {
        return 1.0;
    }
    let ok = tail.windows(2).filter(|w| w[1].1 <= w[0].1).count();
    ok as f64 / (tail.len() - 1) as f64
}

/// `max_t (|x_breve_t - x_hat_t|_inf - v_t)` over admitted VAP steps, replaying
/// the real-time sequence in generation order. At most 0 for a correct run.
pub fn vap_audit(records: &[VapRecord], x0: &Params) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Empty("vap records"));
    }
    let mut order: Vec<&VapRecord> = records.iter().collect();
    order.sort_by_key(|r| r.gen);
    let mut xhat = x0.clone();
    let mut worst = f64::NEG_INFINITY;
    for rec in order {
        let mut dev: f64 = 0.0;
        for (row, v) in &rec.view {
            match xhat.get(row) {
                Some(x) => {
                    for (a, b) in v.iter().zip(x) {
                        dev = dev.max((a - b).abs());
                    }
                }
                None => {
                    for a in v {
                        dev = dev.max(a.abs());
                    }
                }
            }
        }
        worst = worst.max(dev - rec.threshold);
        for (row, d) in &rec.delta {
            let x = xhat.entry(*row).or_insert_with(|| vec![0.0; d.len()]);
            for (a, v) in x.iter_mut().zip(d) {
                *a += v;
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakdownRow {
    pub staleness: Option<u64>,
    pub model: String,
    pub compute_ticks: u64,
    pub wait_ticks: u64,
}

/// Total compute and wait ticks of one run.
pub fn time_breakdown_report(entries: &[TimeBreakdown], model: &ConsistencyModel) -> BreakdownRow {
    BreakdownRow {
        staleness: match model {
            ConsistencyModel::Bsp => Some(0),
            m => m.staleness(),
        },
        model: model.name().to_string(),
        compute_ticks: entries.iter().map(|e| e.compute_ticks).sum(),
        wait_ticks: entries.iter().map(|e| e.wait_ticks).sum(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(c_worker: u64, c_param: u64) -> ReadStalenessSample {
        ReadStalenessSample::new(0, c_worker, c_param, RowKey(0), 0, 0)
    }

    #[test]
    fn differential_convention() {
        assert_eq!(sample(5, 5).differential, -1);
        assert_eq!(sample(5, 2).differential, -4);
    }

    #[test]
    fn histogram_normalizes_and_pads() {
        let h = staleness_histogram(&[sample(3, 3), sample(3, 3), sample(3, 2), sample(3, 4)], Some(2)).unwrap();
        let diffs: Vec<i64> = h.bins.iter().map(|b| b.differential).collect();
        assert_eq!(diffs, vec![-3, -2, -1, 0]);
        assert_eq!(h.bins.iter().map(|b| b.normalized).sum::<f64>(), 1.0);
        assert_eq!(h.bins[2].count, 2);
        assert!(staleness_histogram(&[], None).is_err());
        let pm = staleness_histogram(&[sample(1, 1), sample(4, 4)], Some(0)).unwrap();
        assert!(pm.is_point_mass_at(-1));
        assert!(!h.is_point_mass_at(-1));
    }

    fn apply(shard: usize, version: u64, worker: usize, clock: u64) -> ApplyRecord {
        ApplyRecord { shard, version, worker, clock }
    }

    #[test]
    fn safety_audit_flags_missing_updates() {
        // two workers; clock 0 batches applied at versions 1 and 3
        let log = vec![apply(0, 1, 0, 0), apply(0, 2, 0, 1), apply(0, 3, 1, 0)];
        let mut ok = sample(1, 1);
        ok.version = 3;
        let mut bad = sample(1, 1);
        bad.version = 2;
        let r = ssp_safety_audit(&[ok, bad], &log, 2, 0);
        assert_eq!(r.checked, 2);
        assert_eq!(r.violations, 1);
        assert_eq!(r.first_violation, Some(bad));
        // with s = 1 nothing is required yet at clock 1
        assert_eq!(ssp_safety_audit(&[bad], &log, 2, 1).violations, 0);
        // a required batch that never arrived is a violation
        let mut far = sample(3, 3);
        far.version = 99;
        assert_eq!(ssp_safety_audit(&[far], &log, 2, 0).violations, 1);
    }

    #[test]
    fn log_spacing() {
        let v = log_spaced(100, 100_000, 4);
        assert_eq!(v.first(), Some(&100));
        assert_eq!(v.last(), Some(&100_000));
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(v.len(), 13);
    }

    #[test]
    fn slope_of_power_law() {
        let series: Vec<(u64, f64)> =
            log_spaced(10, 1_000_000, 5).into_iter().map(|t| (t, 3.0 / (t as f64).sqrt())).collect();
        assert!((regret_slope(&series, 100, 100_000).unwrap() + 0.5).abs() < 1e-3);
        assert!(regret_slope(&series, 5, 6).is_err());
    }

    #[test]
    fn gamma_zero_when_views_match() {
        let x: Params = [(RowKey(0), vec![1.0, 2.0])].into_iter().collect();
        let d = decompose_staleness(7, &x, &x, &[1.0, 2.0], 4, 2).unwrap();
        assert_eq!(d.gamma_norm, 0.0);
        assert_eq!(d.u_bar, 3.0 / 20.0);
    }

    #[test]
    fn gamma_of_known_offset() {
        let a: Params = [(RowKey(0), vec![3.0, 4.0])].into_iter().collect();
        let b: Params = [(RowKey(0), vec![0.0, 0.0])].into_iter().collect();
        // u_bar = 10 / (2 * 5) = 1, deviation 5
        let d = decompose_staleness(0, &a, &b, &[10.0], 2, 2).unwrap();
        assert_eq!(d.gamma_norm, 5.0);
    }

    #[test]
    fn variance_zero_for_identical_replicas() {
        let mut s = TraceSnapshot::new(0, 0, 0);
        s.x_tilde.insert(RowKey(0), vec![1.0, -2.0]);
        let trace = vec![s.clone(), {
            s.t = 1;
            s
        }];
        let v = variance_series(&[&trace, &trace, &trace]).unwrap();
        assert!(v.points.iter().all(|p| p.1 == 0.0));
        assert_eq!(v.decreasing_fraction, 1.0);
    }

    #[test]
    fn variance_matches_two_point_formula() {
        let mk = |x: f64| {
            let mut s = TraceSnapshot::new(0, 0, 0);
            s.x_tilde.insert(RowKey(0), vec![x]);
            vec![s]
        };
        let (a, b) = (mk(1.0), mk(3.0));
        let v = variance_series(&[&a, &b]).unwrap();
        assert_eq!(v.points, vec![(0, 1.0)]);
        let short: Vec<TraceSnapshot> = Vec::new();
        assert!(matches!(variance_series(&[&a, &short]), Err(Error::ReplicaMismatch(_))));
    }

    #[test]
    fn vap_audit_single_worker_is_negative() {
        let x0: Params = [(RowKey(0), vec![0.0])].into_iter().collect();
        let recs = vec![
            VapRecord {
                gen: 1,
                worker: 0,
                clock: 0,
                time: 0,
                view: vec![(RowKey(0), vec![0.0])],
                delta: vec![(RowKey(0), vec![0.5])],
                threshold: 1.0,
            },
            VapRecord {
                gen: 2,
                worker: 0,
                clock: 1,
                time: 1,
                view: vec![(RowKey(0), vec![0.5])],
                delta: vec![(RowKey(0), vec![0.1])],
                threshold: 0.5,
            },
        ];
        assert_eq!(vap_audit(&recs, &x0).unwrap(), -0.5);
        let stale =
            vec![recs[0].clone(), VapRecord { view: vec![(RowKey(0), vec![0.0])], threshold: 0.25, ..recs[1].clone() }];
        assert_eq!(vap_audit(&stale, &x0).unwrap(), 0.25);
    }

    #[test]
    fn breakdown_totals() {
        let e = [
            TimeBreakdown { worker: 0, clock: 0, compute_ticks: 5, wait_ticks: 2 },
            TimeBreakdown { worker: 1, clock: 0, compute_ticks: 5, wait_ticks: 0 },
        ];
        let r = time_breakdown_report(&e, &ConsistencyModel::Ssp { staleness: 3 });
        assert_eq!((r.compute_ticks, r.wait_ticks, r.staleness), (10, 2, Some(3)));
        assert_eq!(r.model, "ssp");
    }
}
