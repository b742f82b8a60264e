//! SGD matrix factorization `D ~ L R` over the observed entries.
//!
//! `L` rows are table rows `0..N`, `R` columns are rows `N..N+M`.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{norm2, Minibatch, Params, StepOutput, Workload};
use crate::error::{Error, Result};
use crate::seeds::{derive_seed, INIT, SHUFFLE};
use crate::types::RowKey;

/// Observed entries of an `n_rows x n_cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(n_rows: usize, n_cols: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Shape(format!("matrix must be non-empty, got {n_rows}x{n_cols}")));
        }
        let mut seen = BTreeSet::new();
        for &(i, j, v) in &entries {
            if i >= n_rows || j >= n_cols {
                return Err(Error::Shape(format!("entry ({i}, {j}) outside {n_rows}x{n_cols}")));
            }
            if !v.is_finite() {
                return Err(Error::Shape(format!("entry ({i}, {j}) is not finite")));
            }
            if !seen.insert((i, j)) {
                return Err(Error::Shape(format!("duplicate entry ({i}, {j})")));
            }
        }
        Ok(SparseMatrix { n_rows, n_cols, entries })
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Parses `n_rows n_cols nnz` followed by `i j value` lines.
    pub fn read_from(reader: impl BufRead) -> Result<Self> {
        let mut header: Option<(usize, usize, usize)> = None;
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = text.split_whitespace().collect();
            let bad = |msg: String| Error::Parse { line: lineno, msg };
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            match header {
                None => {
                    let n = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("bad header field '{s}': {e}")));
                    header = Some((n(fields[0])?, n(fields[1])?, n(fields[2])?));
                }
                Some(_) => {
                    let i = fields[0].parse::<usize>().map_err(|e| bad(format!("bad row index: {e}")))?;
                    let j = fields[1].parse::<usize>().map_err(|e| bad(format!("bad column index: {e}")))?;
                    let v = fields[2].parse::<f64>().map_err(|e| bad(format!("bad value: {e}")))?;
                    entries.push((i, j, v));
                }
            }
        }
        let (n_rows, n_cols, nnz) = header.ok_or(Error::Empty("matrix file"))?;
        if entries.len() != nnz {
            return Err(Error::Shape(format!("header says {nnz} entries, found {}", entries.len())));
        }
        SparseMatrix::new(n_rows, n_cols, entries)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.entries.len())?;
        for (i, j, v) in &self.entries {
            writeln!(w, "{i} {j} {v:?}")?;
        }
        Ok(())
    }
}

/// A synthetic instance with known factors.
#[derive(Debug, Clone)]
pub struct PlantedMf {
    pub matrix: SparseMatrix,
    pub l: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    /// Sum of the realized squared noise over observed entries.
    pub noise_floor: f64,
}

/// Planted rank-`rank` factors with N(0, 1/sqrt(rank)) entries, so products
/// have unit variance; a `density` fraction of cells is observed with
/// additive N(0, noise_var) noise.
pub fn planted_mf(
    n_rows: usize,
    n_cols: usize,
    rank: usize,
    density: f64,
    noise_var: f64,
    seed: u64,
) -> Result<PlantedMf> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Config(format!("density must be in (0, 1], got {density}")));
    }
    if rank == 0 || rank > n_rows.min(n_cols) {
        return Err(Error::Config(format!("rank {rank} must be in 1..=min({n_rows}, {n_cols})")));
    }
    if noise_var.is_nan() || noise_var < 0.0 {
        return Err(Error::Config(format!("noise variance must be >= 0, got {noise_var}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = Normal::new(0.0, (1.0 / (rank as f64).sqrt()).sqrt()).expect("positive std");
    let noise = Normal::new(0.0, noise_var.sqrt()).expect("non-negative std");
    let l: Vec<Vec<f64>> = (0..n_rows).map(|_| (0..rank).map(|_| factor.sample(&mut rng)).collect()).collect();
    let r: Vec<Vec<f64>> = (0..n_cols).map(|_| (0..rank).map(|_| factor.sample(&mut rng)).collect()).collect();
    let cells = n_rows * n_cols;
    let nnz = ((cells as f64) * density).round().max(1.0) as usize;
    let mut picked: Vec<usize> = sample(&mut rng, cells, nnz).into_vec();
    picked.sort_unstable();
    let mut floor = 0.0;
    let entries = picked
        .into_iter()
        .map(|cell| {
            let (i, j) = (cell / n_cols, cell % n_cols);
            let eps = noise.sample(&mut rng);
            floor += eps * eps;
            (i, j, dot(&l[i], &r[j]) + eps)
        })
        .collect();
    Ok(PlantedMf { matrix: SparseMatrix::new(n_rows, n_cols, entries)?, l, r, noise_floor: floor })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deltas `(gamma (e R - lambda L), gamma (e L - lambda R))` for one observed entry.
pub fn mf_sgd_step(d_ij: f64, l_row: &[f64], r_col: &[f64], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if l_row.len() != r_col.len() {
        return Err(Error::Shape(format!("factor lengths differ: {} vs {}", l_row.len(), r_col.len())));
    }
    let e = d_ij - dot(l_row, r_col);
    let dl = l_row.iter().zip(r_col).map(|(l, r)| gamma * (e * r - lambda * l)).collect();
    let dr = l_row.iter().zip(r_col).map(|(l, r)| gamma * (e * l - lambda * r)).collect();
    Ok((dl, dr))
}

/// `(sum e^2 + lambda (|L|^2 + |R|^2), sum e^2)` with factors read from `params`.
pub fn mf_objective(data: &SparseMatrix, params: &Params, rank: usize, lambda: f64) -> Result<(f64, f64)> {
    let fetch = |key: u64| -> Result<&Vec<f64>> {
        let row = params.get(&RowKey(key)).ok_or_else(|| Error::Shape(format!("missing factor row {key}")))?;
        if row.len() != rank {
            return Err(Error::Shape(format!("factor row {key} has width {}, expected {rank}", row.len())));
        }
        Ok(row)
    };
    let n = data.n_rows as u64;
    let mut sq = 0.0;
    for &(i, j, v) in &data.entries {
        let e = v - dot(fetch(i as u64)?, fetch(n + j as u64)?);
        sq += e * e;
    }
    let mut reg = 0.0;
    for key in 0..n + data.n_cols as u64 {
        reg += fetch(key)?.iter().map(|x| x * x).sum::<f64>();
    }
    Ok((sq + lambda * reg, sq))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfConfig {
    pub rank: usize,
    pub lambda: f64,
    /// Constant SGD step size.
    pub eta0: f64,
    pub init_scale: f64,
    pub seed: u64,
    pub minibatch: Minibatch,
}

impl MfConfig {
    pub fn new(rank: usize) -> Self {
        MfConfig { rank, lambda: 0.0, eta0: 0.01, init_scale: 0.1, seed: 0, minibatch: Minibatch::Fraction(0.1) }
    }
}

#[derive(Debug, Clone)]
pub struct MfWorkload {
    data: SparseMatrix,
    config: MfConfig,
    shuffle_seed: u64,
}

impl MfWorkload {
    pub fn new(data: SparseMatrix, config: MfConfig) -> Result<Self> {
        if config.rank == 0 || config.rank > data.n_rows.min(data.n_cols) {
            return Err(Error::Config(format!(
                "rank {} must be in 1..=min({}, {})",
                config.rank, data.n_rows, data.n_cols
            )));
        }
        let positive = |x: f64| x > 0.0;
        if !positive(config.eta0) || config.lambda.is_nan() || config.lambda < 0.0 || !positive(config.init_scale) {
            return Err(Error::Config("mf needs eta0 > 0, lambda >= 0, init_scale > 0".into()));
        }
        if data.entries.is_empty() {
            return Err(Error::Empty("observed entries"));
        }
        let shuffle_seed = derive_seed(config.seed, SHUFFLE);
        Ok(MfWorkload { data, config, shuffle_seed })
    }

    pub fn data(&self) -> &SparseMatrix {
        &self.data
    }

    pub fn config(&self) -> &MfConfig {
        &self.config
    }

    pub fn with_eta(&self, eta0: f64) -> Self {
        let mut w = self.clone();
        w.config.eta0 = eta0;
        w
    }

    fn shard_len(&self, worker: usize, workers: usize) -> usize {
        let n = self.data.entries.len();
        n / workers + usize::from(worker < n % workers)
    }

    fn epoch_order(&self, worker: usize, epoch: u64, len: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..len).collect();
        let seed = derive_seed(derive_seed(self.shuffle_seed, worker as u64), epoch);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order
    }
}

impl Workload for MfWorkload {
    fn name(&self) -> &'static str {
        "mf"
    }

    fn width(&self) -> usize {
        self.config.rank
    }

    fn initial_params(&self) -> Params {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, INIT));
        let s = self.config.init_scale;
        let rows = (self.data.n_rows + self.data.n_cols) as u64;
        (0..rows).map(|k| (RowKey(k), (0..self.config.rank).map(|_| rng.random_range(-s..=s)).collect())).collect()
    }

    fn items_per_clock(&self, workers: usize) -> Result<usize> {
        if workers == 0 {
            return Err(Error::NoWorkers);
        }
        let smallest = self.data.entries.len() / workers;
        if smallest == 0 {
            return Err(Error::Config(format!("{} entries cannot feed {workers} workers", self.data.entries.len())));
        }
        self.config.minibatch.items(smallest)
    }

    /// The shard is walked in a fresh seeded permutation each epoch.
    fn schedule(&self, worker: usize, clock: u64, workers: usize) -> Result<Vec<usize>> {
        let m = self.items_per_clock(workers)?;
        let len = self.shard_len(worker, workers);
        let start = clock * m as u64;
        let mut out = Vec::with_capacity(m);
        let mut cached: Option<(u64, Vec<usize>)> = None;
        for k in start..start + m as u64 {
            let epoch = k / len as u64;
            if cached.as_ref().map(|(e, _)| *e) != Some(epoch) {
                cached = Some((epoch, self.epoch_order(worker, epoch, len)));
            }
            let local = cached.as_ref().expect("set above").1[(k % len as u64) as usize];
            out.push(worker + local * workers);
        }
        Ok(out)
    }

    fn rows_of(&self, item: usize) -> Vec<RowKey> {
        let (i, j, _) = self.data.entries[item];
        vec![RowKey(i as u64), RowKey((self.data.n_rows + j) as u64)]
    }

    fn step(&self, item: usize, _t: u64, views: &[Vec<f64>]) -> Result<StepOutput> {
        let (i, j, v) = self.data.entries[item];
        let [l, r] = views else {
            return Err(Error::Shape(format!("mf step needs 2 views, got {}", views.len())));
        };
        let gamma = self.config.eta0;
        let e = v - dot(l, r);
        let (dl, dr) = mf_sgd_step(v, l, r, gamma, self.config.lambda)?;
        let grad_norm = (norm2(&dl).powi(2) + norm2(&dr).powi(2)).sqrt() / gamma;
        Ok(StepOutput {
            deltas: vec![(RowKey(i as u64), dl), (RowKey((self.data.n_rows + j) as u64), dr)],
            loss: e * e,
            grad_norm,
        })
    }

    fn step_size_at(&self, _t: u64) -> Result<f64> {
        Ok(self.config.eta0)
    }

    fn objective(&self, x: &Params) -> Result<(f64, f64)> {
        mf_objective(&self.data, x, self.config.rank, self.config.lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn zero_residual_zero_step() {
        let (dl, dr) = mf_sgd_step(2.0, &[1.0, 0.0], &[2.0, 0.0], 0.1, 0.0).unwrap();
        assert_eq!(dl, vec![0.0, 0.0]);
        assert_eq!(dr, vec![0.0, 0.0]);
    }

    #[test]
    fn unit_residual_step() {
        let (dl, dr) = mf_sgd_step(2.0, &[1.0, 0.0], &[1.0, 0.0], 0.1, 0.0).unwrap();
        assert_eq!(dl, vec![0.1, 0.0]);
        assert_eq!(dr, vec![0.1, 0.0]);
    }

    #[test]
    fn pure_shrinkage() {
        let l = [1.0, 2.0];
        let r = [3.0, -1.0];
        let d = 1.0; // <l, r> = 1
        let (dl, _) = mf_sgd_step(d, &l, &r, 0.1, 0.5).unwrap();
        for (a, b) in dl.iter().zip(&l) {
            assert!((a + 0.05 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn length_mismatch() {
        assert!(mf_sgd_step(1.0, &[1.0], &[1.0, 2.0], 0.1, 0.0).is_err());
    }

    fn entry_objective(d: f64, l: &[f64], r: &[f64], lambda: f64) -> f64 {
        let e = d - dot(l, r);
        0.5 * e * e + 0.5 * lambda * (dot(l, l) + dot(r, r))
    }

    #[test]
    fn step_is_negative_scaled_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-5;
        for _ in 0..50 {
            let k = 4;
            let l: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d = rng.random_range(-2.0..2.0);
            let (gamma, lambda) = (0.1, 0.3);
            let (dl, dr) = mf_sgd_step(d, &l, &r, gamma, lambda).unwrap();
            for idx in 0..k {
                let mut lp = l.clone();
                let mut lm = l.clone();
                lp[idx] += h;
                lm[idx] -= h;
                let g = (entry_objective(d, &lp, &r, lambda) - entry_objective(d, &lm, &r, lambda)) / (2.0 * h);
                assert!((dl[idx] + gamma * g).abs() <= 1e-6 * (1.0 + g.abs()));
                let mut rp = r.clone();
                let mut rm = r.clone();
                rp[idx] += h;
                rm[idx] -= h;
                let g = (entry_objective(d, &l, &rp, lambda) - entry_objective(d, &l, &rm, lambda)) / (2.0 * h);
                assert!((dr[idx] + gamma * g).abs() <= 1e-6 * (1.0 + g.abs()));
            }
        }
    }

    fn params_from(l: &[Vec<f64>], r: &[Vec<f64>]) -> Params {
        let mut p = BTreeMap::new();
        for (i, row) in l.iter().enumerate() {
            p.insert(RowKey(i as u64), row.clone());
        }
        for (j, col) in r.iter().enumerate() {
            p.insert(RowKey((l.len() + j) as u64), col.clone());
        }
        p
    }

    #[test]
    fn objective_at_zero_is_sum_of_squares() {
        let m = SparseMatrix::new(2, 3, vec![(0, 0, 1.0), (1, 2, -2.0), (0, 2, 3.0)]).unwrap();
        let p = params_from(&vec![vec![0.0; 2]; 2], &vec![vec![0.0; 2]; 3]);
        assert_eq!(mf_objective(&m, &p, 2, 0.0).unwrap(), (14.0, 14.0));
    }

    #[test]
    fn exact_factorization_has_zero_loss() {
        let planted = planted_mf(20, 15, 3, 0.5, 0.0, 1).unwrap();
        let p = params_from(&planted.l, &planted.r);
        let (_, sq) = mf_objective(&planted.matrix, &p, 3, 0.0).unwrap();
        assert!(sq < 1e-20);
        assert_eq!(planted.noise_floor, 0.0);
    }

    #[test]
    fn objective_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, m, k) = (7, 5, 3);
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..m {
                if rng.random_bool(0.6) {
                    entries.push((i, j, rng.random_range(-3.0..3.0)));
                }
            }
        }
        let data = SparseMatrix::new(n, m, entries).unwrap();
        let l: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let r: Vec<Vec<f64>> = (0..m).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        // dense product then masked residual
        let mut dense = vec![vec![0.0; m]; n];
        for i in 0..n {
            for j in 0..m {
                for z in 0..k {
                    dense[i][j] += l[i][z] * r[j][z];
                }
            }
        }
        let mut sq = 0.0;
        for &(i, j, v) in &data.entries {
            sq += (v - dense[i][j]).powi(2);
        }
        let fro: f64 = l.iter().chain(&r).flatten().map(|x| x * x).sum();
        let lambda = 0.2;
        let (pen, got_sq) = mf_objective(&data, &params_from(&l, &r), k, lambda).unwrap();
        assert!((got_sq - sq).abs() < 1e-9);
        assert!((pen - (sq + lambda * fro)).abs() < 1e-9);
    }

    #[test]
    fn objective_shape_errors() {
        let m = SparseMatrix::new(2, 2, vec![(0, 0, 1.0)]).unwrap();
        let p = params_from(&vec![vec![0.0; 2]; 2], &vec![vec![0.0; 3]; 2]);
        assert!(mf_objective(&m, &p, 2, 0.0).is_err());
        assert!(mf_objective(&m, &Params::new(), 2, 0.0).is_err());
    }

    #[test]
    fn matrix_validation() {
        assert!(SparseMatrix::new(2, 2, vec![(2, 0, 1.0)]).is_err());
        assert!(SparseMatrix::new(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0)]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let planted = planted_mf(10, 8, 2, 0.4, 0.01, 5).unwrap();
        let mut buf = Vec::new();
        planted.matrix.write_to(&mut buf).unwrap();
        let back = SparseMatrix::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, planted.matrix);
    }

    #[test]
    fn file_errors_carry_line_numbers() {
        let err = SparseMatrix::read_from("2 2 1\n0 x 1.0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(SparseMatrix::read_from("2 2 2\n0 0 1.0\n".as_bytes()).is_err());
    }

    #[test]
    fn planted_density_and_floor() {
        let p = planted_mf(300, 200, 5, 0.3, 0.01, 11).unwrap();
        assert_eq!(p.matrix.nnz(), 18_000);
        let per_entry = p.noise_floor / 18_000.0;
        assert!((per_entry - 0.01).abs() < 0.001, "{per_entry}");
    }

    #[test]
    fn schedule_walks_shard_once_per_epoch() {
        let planted = planted_mf(30, 20, 2, 0.3, 0.0, 2).unwrap();
        let mut cfg = MfConfig::new(2);
        cfg.minibatch = Minibatch::Count(7);
        let w = MfWorkload::new(planted.matrix, cfg).unwrap();
        let workers = 3;
        let len = w.shard_len(1, workers);
        let mut seen = Vec::new();
        let mut c = 0;
        while seen.len() < len {
            seen.extend(w.schedule(1, c, workers).unwrap());
            c += 1;
        }
        seen.truncate(len);
        assert!(seen.iter().all(|i| i % workers == 1));
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), len);
        assert_eq!(w.schedule(1, 4, workers).unwrap(), w.schedule(1, 4, workers).unwrap());
    }
}
