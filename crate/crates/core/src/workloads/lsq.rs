//! Distributed least squares: `f(x) = sum_t 0.5 (a_t.x - b_t)^2` on one table row.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{norm2, Params, StepOutput, Workload};
use crate::error::{Error, Result};
use crate::schedule::{clock_major_inverse, step_size, StepSchedule};
use crate::types::RowKey;

pub const LSQ_ROW: RowKey = RowKey(0);

/// One loss component `(a, b)`.
pub type Component = (Vec<f64>, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct LsqConfig {
    pub d: usize,
    pub components: Vec<Component>,
    pub schedule: StepSchedule,
    pub x0: Vec<f64>,
    pub items_per_clock: usize,
    pub seed: u64,
}

impl LsqConfig {
    pub fn new(d: usize, components: Vec<Component>, eta0: f64) -> Self {
        LsqConfig { d, components, schedule: StepSchedule::new(eta0), x0: vec![0.0; d], items_per_clock: 1, seed: 0 }
    }

    /// `n` components with `a_t ~ N(0, a_scale^2 I)` and
    /// `b_t = a_t.x_true + N(0, noise_std^2)`, `x_true ~ N(0, I)`.
    /// Returns the config and `x_true`.
    pub fn synthetic(
        n: usize,
        d: usize,
        a_scale: f64,
        noise_std: f64,
        eta0: f64,
        seed: u64,
    ) -> Result<(Self, Vec<f64>)> {
        if n == 0 || d == 0 {
            return Err(Error::Config("lsq needs n >= 1 and d >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let x_true: Vec<f64> = (0..d).map(|_| unit.sample(&mut rng)).collect();
        let components = (0..n)
            .map(|_| {
                let a: Vec<f64> = (0..d).map(|_| a_scale * unit.sample(&mut rng)).collect();
                let b = dot(&a, &x_true) + noise_std * unit.sample(&mut rng);
                (a, b)
            })
            .collect();
        let mut cfg = LsqConfig::new(d, components, eta0);
        cfg.seed = seed;
        Ok((cfg, x_true))
    }

    /// Parses a header `n d` followed by `b a_1 .. a_d` lines.
    pub fn read_components(reader: impl BufRead) -> Result<(usize, Vec<Component>)> {
        let mut header: Option<(usize, usize)> = None;
        let mut comps = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Parse { line: lineno, msg };
            let fields: Vec<&str> = text.split_whitespace().collect();
            match header {
                None => {
                    if fields.len() != 2 {
                        return Err(bad("header must be 'n d'".into()));
                    }
                    let n = fields[0].parse().map_err(|e| bad(format!("bad n: {e}")))?;
                    let d = fields[1].parse().map_err(|e| bad(format!("bad d: {e}")))?;
                    header = Some((n, d));
                }
                Some((_, d)) => {
                    if fields.len() != d + 1 {
                        return Err(bad(format!("expected {} fields, found {}", d + 1, fields.len())));
                    }
                    let vals: Vec<f64> = fields
                        .iter()
                        .map(|f| f.parse::<f64>().map_err(|e| bad(format!("bad number '{f}': {e}"))))
                        .collect::<Result<_>>()?;
                    comps.push((vals[1..].to_vec(), vals[0]));
                }
            }
        }
        let (n, d) = header.ok_or(Error::Empty("component file"))?;
        if comps.len() != n {
            return Err(Error::Shape(format!("header says {n} components, found {}", comps.len())));
        }
        Ok((d, comps))
    }

    pub fn write_components(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{} {}", self.components.len(), self.d)?;
        for (a, b) in &self.components {
            write!(w, "{b:?}")?;
            for v in a {
                write!(w, " {v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-eta_t (a.x - b) a`.
pub fn lsq_sgd_step(t: u64, x_view: &[f64], component: (&[f64], f64), schedule: &StepSchedule) -> Result<Vec<f64>> {
    let (a, b) = component;
    if a.len() != x_view.len() {
        return Err(Error::Shape(format!("a has length {}, x has {}", a.len(), x_view.len())));
    }
    let eta = step_size(t, schedule)?;
    let r = dot(a, x_view) - b;
    Ok(a.iter().map(|ai| -eta * r * ai).collect())
}

#[derive(Debug, Clone)]
pub struct LsqWorkload {
    config: LsqConfig,
    ata: DMatrix<f64>,
    atb: DVector<f64>,
    btb: f64,
}

impl LsqWorkload {
    pub fn new(config: LsqConfig) -> Result<Self> {
        let d = config.d;
        if d == 0 || config.components.is_empty() {
            return Err(Error::Config("lsq needs d >= 1 and at least one component".into()));
        }
        if config.x0.len() != d {
            return Err(Error::Shape(format!("x0 has length {}, expected {d}", config.x0.len())));
        }
        if config.items_per_clock == 0 {
            return Err(Error::Config("items per clock must be >= 1".into()));
        }
        if config.schedule.eta0.is_nan() || config.schedule.eta0 <= 0.0 {
            return Err(Error::Config("eta0 must be positive".into()));
        }
        let mut ata = DMatrix::zeros(d, d);
        let mut atb = DVector::zeros(d);
        let mut btb = 0.0;
        for (i, (a, b)) in config.components.iter().enumerate() {
            if a.len() != d {
                return Err(Error::Shape(format!("component {i} has length {}, expected {d}", a.len())));
            }
            let av = DVector::from_column_slice(a);
            ata.ger(1.0, &av, &av, 1.0);
            atb.axpy(*b, &av, 1.0);
            btb += b * b;
        }
        Ok(LsqWorkload { config, ata, atb, btb })
    }

    pub fn config(&self) -> &LsqConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.config.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.config.components.is_empty()
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.config.d {
            return Err(Error::Shape(format!("x0 has length {}, expected {}", x0.len(), self.config.d)));
        }
        self.config.x0 = x0;
        Ok(self)
    }

    pub fn with_eta(&self, eta0: f64) -> Self {
        let mut w = self.clone();
        w.config.schedule.eta0 = eta0;
        w
    }

    /// `f(x)` via the precomputed normal equations.
    pub fn f(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.ata * &xv)) - xv.dot(&self.atb) + 0.5 * self.btb
    }

    /// Minimizer of `f` over all components.
    pub fn optimum(&self) -> Result<Vec<f64>> {
        solve_normal(&self.ata, &self.atb).map(|x| x.as_slice().to_vec())
    }
}

/// Least-squares solution of `A^T A x = A^T b`; errors when the system is singular.
pub fn solve_normal(ata: &DMatrix<f64>, atb: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = ata.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 || svd.singular_values.min() <= smax * 1e-12 {
        return Err(Error::NoOptimum);
    }
    svd.solve(atb, 0.0).map_err(|_| Error::NoOptimum)
}

impl Workload for LsqWorkload {
    fn name(&self) -> &'static str {
        "lsq"
    }

    fn width(&self) -> usize {
        self.config.d
    }

    fn initial_params(&self) -> Params {
        [(LSQ_ROW, self.config.x0.clone())].into_iter().collect()
    }

    fn items_per_clock(&self, workers: usize) -> Result<usize> {
        if workers == 0 {
            return Err(Error::NoWorkers);
        }
        Ok(self.config.items_per_clock)
    }

    /// Components are visited cyclically in clock-major order.
    fn schedule(&self, worker: usize, clock: u64, workers: usize) -> Result<Vec<usize>> {
        let m = self.config.items_per_clock as u64;
        let base = clock_major_inverse(worker, clock, workers)? * m;
        let n = self.len() as u64;
        Ok((base..base + m).map(|g| (g % n) as usize).collect())
    }

    fn rows_of(&self, _item: usize) -> Vec<RowKey> {
        vec![LSQ_ROW]
    }

    fn step(&self, item: usize, t: u64, views: &[Vec<f64>]) -> Result<StepOutput> {
        let [x] = views else {
            return Err(Error::Shape(format!("lsq step needs 1 view, got {}", views.len())));
        };
        let (a, b) = &self.config.components[item];
        let r = dot(a, x) - b;
        let delta = lsq_sgd_step(t, x, (a, *b), &self.config.schedule)?;
        Ok(StepOutput { deltas: vec![(LSQ_ROW, delta)], loss: 0.5 * r * r, grad_norm: r.abs() * norm2(a) })
    }

    fn step_size_at(&self, t: u64) -> Result<f64> {
        step_size(t, &self.config.schedule)
    }

    fn objective(&self, x: &Params) -> Result<(f64, f64)> {
        let row = x.get(&LSQ_ROW).ok_or_else(|| Error::Shape("missing lsq row".into()))?;
        if row.len() != self.config.d {
            return Err(Error::Shape(format!("lsq row has width {}, expected {}", row.len(), self.config.d)));
        }
        let f = self.f(row);
        Ok((f, 2.0 * f))
    }

    fn component(&self, item: usize) -> Option<(&[f64], f64)> {
        self.config.components.get(item).map(|(a, b)| (a.as_slice(), *b))
    }
}
