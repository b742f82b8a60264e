use std::time::Duration;

use stalesync_core::metrics::ssp_safety_audit;
use stalesync_core::workloads::{
    planted_mf, LsqConfig, LsqWorkload, MfConfig, MfWorkload, Minibatch, Params, Workload,
};
use stalesync_core::{run_threaded, ConsistencyConfig, ConsistencyModel, Error, ThreadedConfig, Update};

fn replay(x0: &Params, updates: &[Update]) -> Params {
    let mut x = x0.clone();
    for u in updates {
        let row = x.entry(u.row).or_insert_with(|| vec![0.0; u.delta.len()]);
        for (a, d) in row.iter_mut().zip(&u.delta) {
            *a += d;
        }
    }
    x
}

fn assert_close(a: &Params, b: &Params) {
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (r, v) in a {
        for (x, y) in v.iter().zip(&b[r]) {
            assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "row {r}: {x} vs {y}");
        }
    }
}

fn soak(w: &dyn Workload, model: ConsistencyModel, workers: usize, clocks: u64, shards: usize) {
    let mut cfg = ThreadedConfig::new(ConsistencyConfig::new(model), workers, clocks);
    cfg.shards = shards;
    cfg.timeout = Duration::from_secs(20);
    let out = run_threaded(w, &cfg).unwrap();
    assert_eq!(out.updates.iter().filter(|u| u.worker == 0).map(|u| u.clock).max(), Some(clocks - 1));
    assert_close(&out.final_params, &replay(&out.initial_params, &out.updates));
    let s = model.staleness().unwrap();
    let audit = ssp_safety_audit(&out.reads, &out.apply_log, workers, s);
    assert_eq!(audit.violations, 0, "{:?}", audit.first_violation);
    assert!(audit.checked > 0);
}

#[test]
fn threaded_lsq_is_safe_and_conserves_updates() {
    let (cfg, _) = LsqConfig::synthetic(200, 6, 1.0, 0.1, 0.05, 3).unwrap();
    let w = LsqWorkload::new(cfg).unwrap();
    for model in
        [ConsistencyModel::Bsp, ConsistencyModel::Ssp { staleness: 2 }, ConsistencyModel::Essp { staleness: 2 }]
    {
        soak(&w, model, 4, 200, 1);
    }
}

#[test]
fn threaded_mf_is_safe_and_conserves_updates() {
    let planted = planted_mf(40, 30, 3, 0.3, 0.01, 4).unwrap();
    let mut cfg = MfConfig::new(3);
    cfg.minibatch = Minibatch::Count(8);
    let w = MfWorkload::new(planted.matrix, cfg).unwrap();
    for model in [ConsistencyModel::Ssp { staleness: 3 }, ConsistencyModel::Essp { staleness: 1 }] {
        soak(&w, model, 4, 50, 3);
    }
}

#[test]
fn threaded_rejects_vap() {
    let (cfg, _) = LsqConfig::synthetic(10, 2, 1.0, 0.1, 0.05, 3).unwrap();
    let w = LsqWorkload::new(cfg).unwrap();
    let cfg = ThreadedConfig::new(ConsistencyConfig::new(ConsistencyModel::Vap { v0: 1.0 }), 2, 5);
    assert!(matches!(run_threaded(&w, &cfg), Err(Error::Config(_))));
}
