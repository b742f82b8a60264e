//! Domain types shared by the server, client and workloads.

use std::fmt;

use crate::error::{Error, Result};

/// Index of one table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RowKey(pub u64);

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for RowKey {
    fn from(v: u64) -> Self {
        RowKey(v)
    }
}

/// A dense row of parameters stamped with its clock.
///
/// `c_param = x` means every update generated at clocks `< x` by every worker
/// has been applied to `values`. `version` counts the increment batches the
/// owning shard had applied when this copy was taken, so two copies of the
/// same row can be ordered even when their clocks agree.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRow {
    pub values: Vec<f64>,
    pub c_param: u64,
    pub version: u64,
}

impl ParamRow {
    pub fn zeros(width: usize) -> Self {
        ParamRow { values: vec![0.0; width], c_param: 0, version: 0 }
    }

    pub fn new(values: Vec<f64>) -> Self {
        ParamRow { values, c_param: 0, version: 0 }
    }

    /// True when `other` was taken no earlier than `self` by the same shard.
    pub fn is_older_than(&self, other: &ParamRow) -> bool {
        other.version > self.version || other.c_param > self.c_param
    }

    pub fn add_assign(&mut self, row: RowKey, delta: &[f64]) -> Result<()> {
        add_into(row, &mut self.values, delta)
    }
}

/// Additive update `u_{p,c}` for one row.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub worker: usize,
    pub clock: u64,
    pub row: RowKey,
    pub delta: Vec<f64>,
}

impl Update {
    pub fn new(worker: usize, clock: u64, row: RowKey, delta: Vec<f64>) -> Self {
        Update { worker, clock, row, delta }
    }
}

/// Elementwise `dst += delta`, checking widths.
pub fn add_into(row: RowKey, dst: &mut [f64], delta: &[f64]) -> Result<()> {
    if dst.len() != delta.len() {
        return Err(Error::LengthMismatch { row, expected: dst.len(), got: delta.len() });
    }
    for (d, u) in dst.iter_mut().zip(delta) {
        *d += *u;
    }
    Ok(())
}

/// Which consistency model governs reads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConsistencyModel {
    Bsp,
    Ssp { staleness: u64 },
    Essp { staleness: u64 },
    Vap { v0: f64 },
}

impl ConsistencyModel {
    /// Staleness bound for clock-gated models. BSP is SSP with `s = 0`.
    pub fn staleness(&self) -> Option<u64> {
        match *self {
            ConsistencyModel::Bsp => Some(0),
            ConsistencyModel::Ssp { staleness } | ConsistencyModel::Essp { staleness } => Some(staleness),
            ConsistencyModel::Vap { .. } => None,
        }
    }

    /// Whether the server pushes rows to registered clients on clock advance.
    pub fn is_eager(&self) -> bool {
        matches!(self, ConsistencyModel::Essp { .. })
    }

    pub fn is_vap(&self) -> bool {
        matches!(self, ConsistencyModel::Vap { .. })
    }

    pub fn vap_v0(&self) -> Option<f64> {
        match *self {
            ConsistencyModel::Vap { v0 } => Some(v0),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConsistencyModel::Bsp => "bsp",
            ConsistencyModel::Ssp { .. } => "ssp",
            ConsistencyModel::Essp { .. } => "essp",
            ConsistencyModel::Vap { .. } => "vap",
        }
    }

    /// Builds a model from the flat field representation, enforcing that the
    /// staleness is present exactly for SSP/ESSP and `v0` exactly for VAP.
    pub fn from_parts(name: &str, staleness: Option<u64>, v0: Option<f64>) -> Result<Self> {
        let name = name.to_ascii_lowercase();
        match (name.as_str(), staleness, v0) {
            ("bsp", None, None) => Ok(ConsistencyModel::Bsp),
            ("bsp", Some(_), _) => Err(Error::Config("model bsp takes no staleness (it is ssp with s = 0)".into())),
            ("ssp", Some(s), None) => Ok(ConsistencyModel::Ssp { staleness: s }),
            ("essp", Some(s), None) => Ok(ConsistencyModel::Essp { staleness: s }),
            ("ssp" | "essp", None, _) => Err(Error::Config(format!("model {name} requires staleness"))),
            ("vap", None, Some(v)) if v > 0.0 && v.is_finite() => Ok(ConsistencyModel::Vap { v0: v }),
            ("vap", None, Some(v)) => Err(Error::Config(format!("vap_v0 must be positive and finite, got {v}"))),
            ("vap", None, None) => Err(Error::Config("model vap requires vap_v0".into())),
            ("vap", Some(_), _) => Err(Error::Config("model vap does not take a staleness".into())),
            (_, _, Some(_)) => Err(Error::Config(format!("vap_v0 is only valid for model vap, not {name}"))),
            _ => Err(Error::Config(format!("unknown consistency model '{name}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyConfig {
    pub model: ConsistencyModel,
    pub read_my_writes: bool,
}

impl ConsistencyConfig {
    pub fn new(model: ConsistencyModel) -> Self {
        ConsistencyConfig { model, read_my_writes: true }
    }

    pub fn with_read_my_writes(mut self, on: bool) -> Self {
        self.read_my_writes = on;
        self
    }
}

/// Per-worker completed-clock counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClockVector {
    clocks: Vec<u64>,
}

impl ClockVector {
    pub fn new(workers: usize) -> Self {
        ClockVector { clocks: vec![0; workers] }
    }

    pub fn get(&self, worker: usize) -> u64 {
        self.clocks[worker]
    }

    pub fn len(&self) -> usize {
        self.clocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clocks.is_empty()
    }

    /// Advances one worker's clock by one and returns the new value.
    pub fn tick(&mut self, worker: usize) -> u64 {
        self.clocks[worker] += 1;
        self.clocks[worker]
    }

    pub fn min_clock(&self) -> u64 {
        self.clocks.iter().copied().min().unwrap_or(0)
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.clocks
    }
}
