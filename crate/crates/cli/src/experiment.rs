//! Builds workloads from configs, runs replicas, and writes result files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::thread;

use serde::Serialize;

use stalesync_core::metrics::{build_report, ObjectivePoint, Report};
use stalesync_core::schedule::StepSchedule;
use stalesync_core::seeds::{derive_seed, DATA, TRANSPORT};
use stalesync_core::workloads::{planted_mf, LsqConfig, LsqWorkload, MfConfig, MfWorkload, SparseMatrix, Workload};
use stalesync_core::{run, DelayModel, RunConfig, RunOutput};

use crate::config::{DelaySpec, ExperimentConfig, WorkloadSpec, MODEL_KEYS};
use crate::error::CliError;

pub const OUT_ENV: &str = "STALESYNC_OUT";

pub struct Instance {
    pub workload: Box<dyn Workload>,
    /// Planted-noise floor of a synthetic MF instance.
    pub noise_floor: Option<f64>,
    /// Objective at the least-squares solution.
    pub optimum_objective: Option<f64>,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    Ok(BufReader::new(File::open(path).map_err(|e| CliError::io(path, e))?))
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance, CliError> {
    let data_seed = derive_seed(cfg.seed, DATA);
    match &cfg.workload {
        WorkloadSpec::Lsq(spec) => {
            let (mut lc, x_true) = match &spec.data {
                Some(path) => {
                    let (d, comps) = LsqConfig::read_components(open(path)?)?;
                    (LsqConfig::new(d, comps, cfg.eta0), None)
                }
                None => {
                    let (lc, x) =
                        LsqConfig::synthetic(spec.n, spec.d, spec.a_scale, spec.noise_std, cfg.eta0, data_seed)?;
                    (lc, Some(x))
                }
            };
            lc.schedule = StepSchedule::new(cfg.eta0).with_drift(spec.drift_r);
            lc.items_per_clock = spec.items_per_clock;
            lc.seed = cfg.seed;
            let mut w = LsqWorkload::new(lc)?;
            if let (true, Some(x)) = (spec.warm_start, x_true) {
                w = w.with_x0(x)?;
            }
            let optimum_objective = w.optimum().ok().map(|x| w.f(&x));
            Ok(Instance { workload: Box::new(w), noise_floor: None, optimum_objective })
        }
        WorkloadSpec::Mf(spec) => {
            let (matrix, noise_floor) = match &spec.data {
                Some(path) => (SparseMatrix::read_from(open(path)?)?, None),
                None => {
                    let p = planted_mf(spec.rows, spec.cols, spec.rank, spec.density, spec.noise_var, data_seed)?;
                    (p.matrix, Some(p.noise_floor))
                }
            };
            let mut mc = MfConfig::new(spec.rank);
            mc.lambda = spec.lambda;
            mc.eta0 = cfg.eta0;
            mc.init_scale = spec.init_scale;
            mc.seed = cfg.seed;
            mc.minibatch = spec.minibatch;
            let w = MfWorkload::new(matrix, mc)?;
            Ok(Instance { workload: Box::new(w), noise_floor, optimum_objective: None })
        }
    }
}

/// Replicas share data, initialization and shuffles; they differ only in
/// network timing.
pub fn transport_seed(master: u64, replica: usize) -> u64 {
    derive_seed(derive_seed(master, TRANSPORT), replica as u64)
}

pub fn run_config(cfg: &ExperimentConfig, replica: usize) -> Result<RunConfig, CliError> {
    let delays = match cfg.delay {
        DelaySpec::Zero => DelayModel::zero(),
        DelaySpec::Uniform { lo, hi } => DelayModel::uniform(lo, hi, transport_seed(cfg.seed, replica))?,
    };
    let mut rc = RunConfig::new(cfg.consistency, cfg.workers, cfg.clocks)
        .with_shards(cfg.shards)
        .with_delays(delays)
        .with_compute_ticks(cfg.compute_ticks);
    rc.retry_ticks = cfg.retry_ticks;
    rc.cache_capacity = cfg.cache_capacity;
    rc.validate()?;
    Ok(rc)
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaSummary {
    pub max_ratio: f64,
    pub max_ubar_ratio: f64,
    pub violations: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicaSummary {
    pub replica: usize,
    pub transport_seed: u64,
    pub final_objective: Option<f64>,
    pub diverged: bool,
    pub clocks_completed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub master: u64,
    pub data: u64,
    pub transport: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub workload: String,
    pub model: String,
    pub staleness: Option<u64>,
    pub final_objective: f64,
    pub final_squared_loss: f64,
    pub noise_floor: Option<f64>,
    pub optimum_objective: Option<f64>,
    pub diverged: bool,
    pub gamma_bound: Option<GammaSummary>,
    pub regret_slope: Option<f64>,
    pub mean_staleness: Option<f64>,
    pub variance_decreasing_fraction: Option<f64>,
    pub wait_ticks: u64,
    pub seeds: Seeds,
    pub replicas: Vec<ReplicaSummary>,
    pub config: BTreeMap<String, String>,
}

pub struct Experiment {
    pub summary: Summary,
    pub report: Report,
    pub objective: Vec<ObjectivePoint>,
}

impl Experiment {
    pub fn diverged(&self) -> bool {
        self.summary.diverged
    }
}

/// Runs every replica (in parallel) and derives the report.
pub fn execute(cfg: &ExperimentConfig) -> Result<Experiment, CliError> {
    let instance = build_instance(cfg)?;
    let configs = (0..cfg.replicas).map(|r| run_config(cfg, r)).collect::<Result<Vec<_>, _>>()?;
    let workload = instance.workload.as_ref();
    let runs: Vec<RunOutput> = thread::scope(|scope| {
        let handles: Vec<_> = configs.iter().map(|rc| scope.spawn(move || run(workload, rc))).collect();
        handles
            .into_iter()
            .map(|h| {
                h.join().unwrap_or_else(|_| Err(stalesync_core::Error::Protocol("replica thread panicked".into())))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let report = build_report(&runs, workload, &configs[0])?;
    let first = &runs[0];
    let replicas = runs
        .iter()
        .enumerate()
        .map(|(i, r)| ReplicaSummary {
            replica: i,
            transport_seed: transport_seed(cfg.seed, i),
            final_objective: r.final_objective(),
            diverged: r.diverged,
            clocks_completed: r.metrics.objective.last().map_or(0, |p| p.clock),
        })
        .collect();
    let s = &report.summary;
    let summary = Summary {
        workload: cfg.workload.name().to_string(),
        model: cfg.consistency.model.name().to_string(),
        staleness: cfg.consistency.model.staleness(),
        final_objective: s.final_objective,
        final_squared_loss: s.final_squared_loss,
        noise_floor: instance.noise_floor,
        optimum_objective: instance.optimum_objective,
        diverged: runs.iter().any(|r| r.diverged),
        gamma_bound: s.gamma_bound.as_ref().map(|g| GammaSummary {
            max_ratio: g.max_gamma_ratio,
            max_ubar_ratio: g.max_ubar_ratio,
            violations: g.gamma_violations + g.ubar_violations,
            steps: g.steps,
        }),
        regret_slope: s.regret_slope,
        mean_staleness: s.mean_differential,
        variance_decreasing_fraction: s.variance_decreasing_fraction,
        wait_ticks: first.metrics.breakdown.iter().map(|b| b.wait_ticks).sum(),
        seeds: Seeds {
            master: cfg.seed,
            data: derive_seed(cfg.seed, DATA),
            transport: (0..cfg.replicas).map(|r| transport_seed(cfg.seed, r)).collect(),
        },
        replicas,
        config: cfg.echo.clone(),
    };
    Ok(Experiment { summary, report, objective: first.metrics.objective.clone() })
}

pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| cfg.output_dir.clone())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_outputs(dir: &Path, exp: &Experiment) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (name, bytes) in &exp.report.files {
        write_file(&dir.join(name), bytes)?;
    }
    write_file(&dir.join("summary.json"), &json_bytes(&exp.summary)?)
}

fn label(cfg: &ExperimentConfig) -> String {
    let model = cfg.consistency.model;
    match (model.staleness(), model.vap_v0()) {
        (Some(s), _) if model.name() != "bsp" => format!("{}_s{s}", model.name()),
        (_, Some(v0)) => format!("vap_v{v0}"),
        _ => model.name().to_string(),
    }
}

/// Rejects configs that differ in anything but the consistency model.
pub fn check_comparable(configs: &[ExperimentConfig]) -> Result<(), CliError> {
    let Some(first) = configs.first() else {
        return Err(CliError::Usage("compare needs at least one config".into()));
    };
    let strip = |c: &ExperimentConfig| -> BTreeMap<String, String> {
        c.echo.iter().filter(|(k, _)| !MODEL_KEYS.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect()
    };
    let base = strip(first);
    for c in &configs[1..] {
        let other = strip(c);
        let keys: std::collections::BTreeSet<&String> = base.keys().chain(other.keys()).collect();
        for k in keys {
            if base.get(k) != other.get(k) {
                return Err(CliError::Usage(format!(
                    "{} and {} describe different workloads: `{k}` is {} vs {}",
                    first.source,
                    c.source,
                    base.get(k).map_or("unset", String::as_str),
                    other.get(k).map_or("unset", String::as_str),
                )));
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareEntry<'a> {
    config: &'a str,
    label: String,
    summary: &'a Summary,
}

/// Runs each config and writes per-config outputs plus `compare.csv`.
/// Returns whether any run diverged.
pub fn compare(configs: &[ExperimentConfig], dir: &Path) -> Result<bool, CliError> {
    check_comparable(configs)?;
    let mut csv = b"model,s,clock,virtual_time,objective\n".to_vec();
    let mut results = Vec::new();
    for (i, cfg) in configs.iter().enumerate() {
        let exp = execute(cfg)?;
        let name = format!("{i}_{}", label(cfg));
        write_outputs(&dir.join(&name), &exp)?;
        let model = cfg.consistency.model;
        let s = model.staleness().map(|s| s.to_string()).unwrap_or_default();
        for p in &exp.objective {
            writeln!(csv, "{},{s},{},{},{}", model.name(), p.clock, p.time, p.objective).expect("write to Vec");
        }
        results.push((cfg, name, exp));
    }
    write_file(&dir.join("compare.csv"), &csv)?;
    let entries: Vec<CompareEntry> = results
        .iter()
        .map(|(cfg, name, exp)| CompareEntry { config: &cfg.source, label: name.clone(), summary: &exp.summary })
        .collect();
    write_file(&dir.join("compare.json"), &json_bytes(&entries)?)?;
    Ok(results.iter().any(|(_, _, e)| e.diverged()))
}
