//! Flat `key = value` experiment files with `--key value` overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use stalesync_core::workloads::Minibatch;
use stalesync_core::{ConsistencyConfig, ConsistencyModel};

use crate::error::CliError;

/// Where a setting came from, for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line { file: String, line: usize },
    File(String),
    Flag,
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: Origin,
}

/// Settings as written, before any typing.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    base_dir: Option<PathBuf>,
    file: String,
    entries: BTreeMap<String, Entry>,
}

fn normalize_key(key: &str) -> String {
    key.trim().replace('-', "_").to_ascii_lowercase()
}

impl RawConfig {
    pub fn parse(text: &str, file: &str, base_dir: Option<PathBuf>) -> Result<Self, CliError> {
        let mut raw = RawConfig { base_dir, file: file.to_string(), entries: BTreeMap::new() };
        for (idx, line) in text.lines().enumerate() {
            let origin = Origin::Line { file: file.to_string(), line: idx + 1 };
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(CliError::config(&origin, format!("expected `key = value`, got `{content}`")));
            };
            let key = normalize_key(key);
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(CliError::config(&origin, format!("invalid key `{}`", key)));
            }
            if let Some(prev) = raw.entries.get(&key) {
                return Err(CliError::config(&origin, format!("`{key}` already set at {}", prev.origin)));
            }
            raw.entries.insert(key, Entry { value: value.trim().to_string(), origin });
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string(), path.parent().map(Path::to_path_buf))
    }

    /// Applies `--key value` pairs on top of the file.
    pub fn apply_overrides(&mut self, overrides: &[(String, String)]) {
        for (key, value) in overrides {
            self.entries.insert(normalize_key(key), Entry { value: value.clone(), origin: Origin::Flag });
        }
    }

    pub fn file(&self) -> &str {
        &self.file
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line { file, line } => write!(f, "{file}:{line}"),
            Origin::File(file) => write!(f, "{file}"),
            Origin::Flag => write!(f, "command line"),
        }
    }
}

pub type Overrides = Vec<(String, String)>;

/// Splits `--key value` pairs from positional arguments.
pub fn split_args(args: &[String]) -> Result<(Vec<String>, Overrides), CliError> {
    let mut positional = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        if let Some(key) = arg.strip_prefix("--") {
            if let Some((k, v)) = key.split_once('=') {
                overrides.push((k.to_string(), v.to_string()));
                continue;
            }
            let value = it.next().ok_or_else(|| CliError::Usage(format!("--{key} needs a value")))?;
            overrides.push((key.to_string(), value.clone()));
        } else {
            positional.push(arg.clone());
        }
    }
    Ok((positional, overrides))
}

/// Typed access that remembers every key read, and the value used, for the
/// config echo.
pub struct Reader {
    raw: RawConfig,
    used: BTreeMap<String, String>,
}

impl Reader {
    pub fn new(raw: RawConfig) -> Self {
        Reader { raw, used: BTreeMap::new() }
    }

    fn origin(&self, key: &str) -> Origin {
        self.raw.entries.get(key).map(|e| e.origin.clone()).unwrap_or_else(|| Origin::File(self.raw.file.clone()))
    }

    pub fn error(&self, key: &str, msg: impl Into<String>) -> CliError {
        CliError::config(&self.origin(key), format!("{key}: {}", msg.into()))
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.raw.entries.contains_key(key)
    }

    pub fn opt<T: FromStr + ToString>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        let Some(entry) = self.raw.entries.get(key) else { return Ok(None) };
        let v = entry
            .value
            .parse::<T>()
            .map_err(|e| CliError::config(&entry.origin, format!("{key}: cannot parse `{}`: {e}", entry.value)))?;
        self.used.insert(key.to_string(), v.to_string());
        Ok(Some(v))
    }

    pub fn get<T: FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        match self.opt(key)? {
            Some(v) => Ok(v),
            None => {
                self.used.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    pub fn required<T: FromStr + ToString>(&mut self, key: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        self.opt(key)?.ok_or_else(|| CliError::config(&self.origin(key), format!("missing required key `{key}`")))
    }

    /// An input path relative to the config file's directory (or the
    /// working directory when given on the command line).
    pub fn path(&mut self, key: &str) -> Result<Option<PathBuf>, CliError> {
        let Some(s) = self.opt::<String>(key)? else { return Ok(None) };
        let p = PathBuf::from(&s);
        let from_file = matches!(self.origin(key), Origin::Line { .. });
        Ok(Some(match &self.raw.base_dir {
            Some(base) if from_file && p.is_relative() => base.join(p),
            _ => p,
        }))
    }

    /// Errors on any key that was never read.
    pub fn finish(self) -> Result<BTreeMap<String, String>, CliError> {
        if let Some((key, entry)) = self.raw.entries.iter().find(|(k, _)| !self.used.contains_key(*k)) {
            return Err(CliError::config(&entry.origin, format!("unknown or inapplicable key `{key}`")));
        }
        Ok(self.used)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DelaySpec {
    Zero,
    Uniform { lo: u64, hi: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqSpec {
    pub data: Option<PathBuf>,
    pub n: usize,
    pub d: usize,
    pub a_scale: f64,
    pub noise_std: f64,
    pub items_per_clock: usize,
    pub drift_r: u64,
    /// Start at the planted solution instead of zero (synthetic data only).
    pub warm_start: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfSpec {
    pub data: Option<PathBuf>,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub density: f64,
    pub noise_var: f64,
    pub lambda: f64,
    pub init_scale: f64,
    pub minibatch: Minibatch,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSpec {
    Lsq(LsqSpec),
    Mf(MfSpec),
}

impl WorkloadSpec {
    pub fn name(&self) -> &'static str {
        match self {
            WorkloadSpec::Lsq(_) => "lsq",
            WorkloadSpec::Mf(_) => "mf",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub workload: WorkloadSpec,
    pub eta0: f64,
    pub consistency: ConsistencyConfig,
    pub workers: usize,
    pub clocks: u64,
    pub shards: usize,
    pub compute_ticks: u64,
    pub retry_ticks: u64,
    pub cache_capacity: Option<usize>,
    pub delay: DelaySpec,
    pub seed: u64,
    pub replicas: usize,
    pub output_dir: PathBuf,
    /// Every setting in effect, defaults included.
    pub echo: BTreeMap<String, String>,
    pub source: String,
}

/// Keys that may differ between configs passed to `compare`.
pub const MODEL_KEYS: [&str; 5] = ["model", "staleness", "vap_v0", "read_my_writes", "output_dir"];

pub fn workload_spec(r: &mut Reader, kind: &str) -> Result<WorkloadSpec, CliError> {
    match kind {
        "lsq" => {
            let data = r.path("data")?;
            let (n, d) = if data.is_some() {
                for key in ["lsq_n", "lsq_d", "lsq_a_scale", "lsq_noise_std"] {
                    if r.is_set(key) {
                        return Err(r.error(key, "not allowed together with `data`"));
                    }
                }
                (0, 0)
            } else {
                (r.get("lsq_n", 1000usize)?, r.get("lsq_d", 10usize)?)
            };
            let (a_scale, noise_std) =
                if data.is_some() { (1.0, 0.0) } else { (r.get("lsq_a_scale", 1.0)?, r.get("lsq_noise_std", 1.0)?) };
            let warm_start = r.get("lsq_warm_start", false)?;
            if warm_start && data.is_some() {
                return Err(r.error("lsq_warm_start", "needs synthetic data (no `data` file)"));
            }
            Ok(WorkloadSpec::Lsq(LsqSpec {
                data,
                n,
                d,
                a_scale,
                noise_std,
                items_per_clock: r.get("lsq_items_per_clock", 1usize)?,
                drift_r: r.get("drift_r", 0u64)?,
                warm_start,
            }))
        }
        "mf" => {
            let data = r.path("data")?;
            let (rows, cols, density, noise_var) = if data.is_some() {
                for key in ["mf_rows", "mf_cols", "mf_density", "mf_noise_var"] {
                    if r.is_set(key) {
                        return Err(r.error(key, "not allowed together with `data`"));
                    }
                }
                (0, 0, 0.0, 0.0)
            } else {
                (
                    r.get("mf_rows", 300usize)?,
                    r.get("mf_cols", 200usize)?,
                    r.get("mf_density", 0.3)?,
                    r.get("mf_noise_var", 0.1)?,
                )
            };
            let minibatch = match (r.opt::<f64>("minibatch_fraction")?, r.opt::<usize>("minibatch_count")?) {
                (Some(_), Some(_)) => {
                    return Err(r.error("minibatch_count", "set either minibatch_fraction or minibatch_count"))
                }
                (_, Some(n)) => Minibatch::Count(n),
                (Some(f), None) => Minibatch::Fraction(f),
                (None, None) => {
                    r.get("minibatch_fraction", 0.1)?;
                    Minibatch::Fraction(0.1)
                }
            };
            Ok(WorkloadSpec::Mf(MfSpec {
                data,
                rows,
                cols,
                rank: r.get("mf_rank", 5usize)?,
                density,
                noise_var,
                lambda: r.get("mf_lambda", 0.0)?,
                init_scale: r.get("mf_init_scale", 0.1)?,
                minibatch,
            }))
        }
        other => Err(r.error("workload", format!("unknown workload `{other}` (expected lsq or mf)"))),
    }
}

fn consistency(r: &mut Reader) -> Result<ConsistencyConfig, CliError> {
    let name: String = r.required("model")?;
    let name = name.to_ascii_lowercase();
    if name == "vap" && r.is_set("staleness") {
        return Err(r.error("staleness", "model vap is value-bounded and takes no staleness"));
    }
    let staleness = r.opt::<u64>("staleness")?;
    let v0 = r.opt::<f64>("vap_v0")?;
    let model = ConsistencyModel::from_parts(&name, staleness, v0).map_err(|e| r.error("model", e.to_string()))?;
    Ok(ConsistencyConfig::new(model).with_read_my_writes(r.get("read_my_writes", true)?))
}

impl ExperimentConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self, CliError> {
        let source = raw.file().to_string();
        let mut r = Reader::new(raw);
        let kind: String = r.required("workload")?;
        let workload = workload_spec(&mut r, &kind.to_ascii_lowercase())?;
        let eta0: f64 = r.get("eta0", if matches!(workload, WorkloadSpec::Lsq(_)) { 0.05 } else { 0.01 })?;
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(r.error("eta0", "must be positive"));
        }
        let consistency = consistency(&mut r)?;
        let workers = r.get("workers", 4usize)?;
        if workers == 0 {
            return Err(r.error("workers", "must be >= 1"));
        }
        let clocks = r.get("clocks", 100u64)?;
        let shards = r.get("shards", 1usize)?;
        if shards == 0 {
            return Err(r.error("shards", "must be >= 1"));
        }
        let compute_ticks = r.get("compute_ticks", 10u64)?;
        let retry_ticks = r.get("retry_ticks", 1u64)?;
        if retry_ticks == 0 {
            return Err(r.error("retry_ticks", "must be >= 1"));
        }
        let cache_capacity = r.opt::<usize>("cache_capacity")?;
        if cache_capacity == Some(0) {
            return Err(r.error("cache_capacity", "must be >= 1"));
        }
        let delay = match r.get("delay", "zero".to_string())?.to_ascii_lowercase().as_str() {
            "zero" => DelaySpec::Zero,
            "uniform" => {
                let lo = r.get("delay_min", 0u64)?;
                let hi: u64 = r.required("delay_max")?;
                if lo > hi {
                    return Err(r.error("delay_min", format!("{lo} exceeds delay_max {hi}")));
                }
                DelaySpec::Uniform { lo, hi }
            }
            other => return Err(r.error("delay", format!("unknown delay model `{other}` (expected zero or uniform)"))),
        };
        let seed = r.get("seed", 0u64)?;
        let replicas = r.get("replicas", 1usize)?;
        if replicas == 0 {
            return Err(r.error("replicas", "must be >= 1"));
        }
        // relative to the working directory, unlike `data`
        let output_dir = PathBuf::from(r.get("output_dir", "out".to_string())?);
        let echo = r.finish()?;
        Ok(ExperimentConfig {
            workload,
            eta0,
            consistency,
            workers,
            clocks,
            shards,
            compute_ticks,
            retry_ticks,
            cache_capacity,
            delay,
            seed,
            replicas,
            output_dir,
            echo,
            source,
        })
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut raw = RawConfig::load(path)?;
        raw.apply_overrides(overrides);
        Self::from_raw(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::from_raw(RawConfig::parse(text, "t.conf", None)?)
    }

    #[test]
    fn minimal_lsq() {
        let c = parse("workload = lsq\nmodel = ssp\nstaleness = 3 # bound\n").unwrap();
        assert_eq!(c.consistency.model, ConsistencyModel::Ssp { staleness: 3 });
        assert_eq!(c.workers, 4);
        assert_eq!(c.echo["lsq_n"], "1000");
        assert_eq!(c.echo["staleness"], "3");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse("workload = lsq\n\nmodel ssp\n").unwrap_err();
        assert_eq!(e.to_string(), "t.conf:3: expected `key = value`, got `model ssp`");
        let e = parse("workload = lsq\nmodel = ssp\nstaleness = x\n").unwrap_err();
        assert!(e.to_string().starts_with("t.conf:3: staleness: cannot parse"), "{e}");
    }

    #[test]
    fn vap_with_staleness_is_rejected() {
        let e = parse("workload = lsq\nmodel = vap\nvap_v0 = 0.2\nstaleness = 2\n").unwrap_err();
        assert!(e.to_string().starts_with("t.conf:4: staleness"), "{e}");
    }

    #[test]
    fn unknown_and_foreign_keys_are_rejected() {
        let e = parse("workload = lsq\nmodel = bsp\nmf_rank = 3\n").unwrap_err();
        assert!(e.to_string().contains("t.conf:3") && e.to_string().contains("mf_rank"), "{e}");
        assert!(parse("workload = lsq\nmodel = bsp\nmodel = ssp\n").is_err());
    }

    #[test]
    fn overrides_win() {
        let mut raw = RawConfig::parse("workload = mf\nmodel = essp\nstaleness = 1\n", "t.conf", None).unwrap();
        raw.apply_overrides(&[("staleness".into(), "4".into()), ("mf-rank".into(), "2".into())]);
        let c = ExperimentConfig::from_raw(raw).unwrap();
        assert_eq!(c.consistency.model, ConsistencyModel::Essp { staleness: 4 });
        let WorkloadSpec::Mf(mf) = &c.workload else { panic!() };
        assert_eq!(mf.rank, 2);
        let mut raw = RawConfig::parse("workload = mf\nmodel = essp\n", "t.conf", None).unwrap();
        raw.apply_overrides(&[("staleness".into(), "oops".into())]);
        let e = ExperimentConfig::from_raw(raw).unwrap_err();
        assert!(e.to_string().starts_with("command line: staleness"), "{e}");
    }

    #[test]
    fn split_args_pairs_flags() {
        let args: Vec<String> =
            ["a.conf", "--clocks", "5", "b.conf", "--seed=3"].iter().map(|s| s.to_string()).collect();
        let (pos, ov) = split_args(&args).unwrap();
        assert_eq!(pos, vec!["a.conf", "b.conf"]);
        assert_eq!(ov, vec![("clocks".into(), "5".into()), ("seed".into(), "3".into())]);
        assert!(split_args(&["--clocks".to_string()]).is_err());
    }
}
