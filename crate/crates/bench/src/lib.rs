//! Fixtures shared by the throughput benches.

use stalesync_core::workloads::{planted_mf, LsqConfig, LsqWorkload, MfConfig, MfWorkload, Minibatch};
use stalesync_core::{RowKey, Update};

/// `n` single-worker updates spread over `rows` rows of width `width`.
pub fn updates(n: usize, rows: u64, width: usize) -> Vec<Update> {
    (0..n).map(|i| Update::new(0, 0, RowKey(i as u64 % rows), vec![i as f64; width])).collect()
}

pub fn lsq() -> LsqWorkload {
    let (cfg, _) = LsqConfig::synthetic(1000, 10, 1.0, 1.0, 0.05, 1).expect("valid lsq instance");
    LsqWorkload::new(cfg).expect("valid lsq workload")
}

pub fn mf() -> MfWorkload {
    let planted = planted_mf(300, 200, 5, 0.3, 0.1, 7).expect("valid mf instance");
    let mut cfg = MfConfig::new(5);
    cfg.eta0 = 0.05;
    cfg.minibatch = Minibatch::Fraction(0.05);
    MfWorkload::new(planted.matrix, cfg).expect("valid mf workload")
}
