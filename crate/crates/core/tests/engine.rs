use proptest::prelude::*;

use stalesync_core::metrics::{build_report, ssp_safety_audit, staleness_histogram, CSV_FILES};
use stalesync_core::workloads::{planted_mf, LsqConfig, LsqWorkload, MfConfig, MfWorkload, Minibatch, Params};
use stalesync_core::{run, ConsistencyConfig, ConsistencyModel, DelayModel, RunConfig};

fn lsq(per_clock: usize) -> LsqWorkload {
    let (mut cfg, _) = LsqConfig::synthetic(120, 5, 1.0, 0.2, 0.05, 17).unwrap();
    cfg.items_per_clock = per_clock;
    LsqWorkload::new(cfg).unwrap()
}

fn mf() -> MfWorkload {
    let planted = planted_mf(40, 30, 3, 0.3, 0.01, 5).unwrap();
    let mut cfg = MfConfig::new(3);
    cfg.eta0 = 0.02;
    cfg.minibatch = Minibatch::Count(6);
    MfWorkload::new(planted.matrix, cfg).unwrap()
}

fn cfg(model: ConsistencyModel, p: usize, clocks: u64) -> RunConfig {
    RunConfig::new(ConsistencyConfig::new(model), p, clocks)
}

fn close(a: &Params, b: &Params, tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().all(|(r, v)| v.iter().zip(&b[r]).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs())))
}

#[test]
fn bsp_and_ssp0_match_at_zero_delay() {
    let w = mf();
    let a = run(&w, &cfg(ConsistencyModel::Bsp, 4, 30)).unwrap();
    let b = run(&w, &cfg(ConsistencyModel::Ssp { staleness: 0 }, 4, 30)).unwrap();
    assert_eq!(a.metrics.objective, b.metrics.objective);
    assert_eq!(a.final_params, b.final_params);
}

#[test]
fn bsp_result_does_not_depend_on_sharding() {
    let w = mf();
    let one = run(&w, &cfg(ConsistencyModel::Bsp, 3, 20)).unwrap();
    let many = run(&w, &cfg(ConsistencyModel::Bsp, 3, 20).with_shards(4)).unwrap();
    assert_eq!(one.trace.len(), many.trace.len());
    for (a, b) in one.trace.iter().zip(&many.trace) {
        assert_eq!(a.x_tilde, b.x_tilde);
    }
    assert!(close(&one.final_params, &many.final_params, 1e-12));
}

#[test]
fn tiny_cache_still_finishes_and_stays_safe() {
    let w = mf();
    let model = ConsistencyModel::Ssp { staleness: 2 };
    let out = run(&w, &cfg(model, 4, 20).with_capacity(3).with_delays(DelayModel::uniform(0, 40, 9).unwrap())).unwrap();
    let audit = ssp_safety_audit(&out.metrics.reads, &out.metrics.apply_log, 4, 2);
    assert_eq!(audit.violations, 0);
    assert!(out.metrics.client_stats.iter().any(|c| c.evictions > 0));
}

#[test]
fn essp_histogram_stays_in_range() {
    let w = mf();
    let out = run(
        &w,
        &cfg(ConsistencyModel::Essp { staleness: 3 }, 4, 30).with_delays(DelayModel::uniform(1, 30, 2).unwrap()),
    )
    .unwrap();
    let h = staleness_histogram(&out.metrics.reads, Some(3)).unwrap();
    let total: u64 = h.bins.iter().map(|b| b.count).sum();
    assert_eq!(total, out.metrics.reads.len() as u64);
    assert!(h.bins.iter().all(|b| (-4..=-1).contains(&b.differential)));
}

#[test]
fn report_has_every_csv_with_its_header() {
    let w = lsq(1);
    let c = cfg(ConsistencyModel::Ssp { staleness: 2 }, 3, 50).with_delays(DelayModel::uniform(0, 20, 1).unwrap());
    let runs =
        vec![run(&w, &c).unwrap(), run(&w, &c.clone().with_delays(DelayModel::uniform(0, 20, 2).unwrap())).unwrap()];
    let report = build_report(&runs, &w, &c).unwrap();
    let headers = [
        ("staleness.csv", "differential,count,normalized"),
        ("objective.csv", "clock,virtual_time,objective,squared_loss"),
        ("regret.csv", "T,regret_over_T"),
        ("gamma.csv", "t,u_bar,gamma_norm,bound"),
        ("variance.csv", "t,var_t"),
        ("breakdown.csv", "staleness,model,compute_ticks,wait_ticks"),
    ];
    assert_eq!(report.files.len(), CSV_FILES.len());
    for (name, header) in headers {
        let text = String::from_utf8(report.files[name].clone()).unwrap();
        assert_eq!(text.lines().next(), Some(header), "{name}");
        assert!(text.lines().count() > 1, "{name} has no rows");
    }
    assert!(report.summary.gamma_bound.is_some());
    assert!(!report.summary.diverged);
}

#[test]
fn divergence_halts_the_run() {
    let w = lsq(1).with_eta(50.0);
    let out = run(&w, &cfg(ConsistencyModel::Ssp { staleness: 1 }, 2, 500)).unwrap();
    assert!(out.diverged);
    assert!(out.metrics.objective.last().unwrap().clock < 500);
}

fn model_strategy() -> impl Strategy<Value = ConsistencyModel> {
    prop_oneof![
        Just(ConsistencyModel::Bsp),
        (0u64..4).prop_map(|s| ConsistencyModel::Ssp { staleness: s }),
        (0u64..4).prop_map(|s| ConsistencyModel::Essp { staleness: s }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_runs_are_safe_and_conserve_updates(
        model in model_strategy(),
        p in 1usize..5,
        shards in 1usize..4,
        hi in 0u64..60,
        seed in any::<u64>(),
        rmw in any::<bool>(),
        per_clock in 1usize..4,
    ) {
        let w = lsq(per_clock);
        let mut c = cfg(model, p, 15).with_shards(shards).with_delays(DelayModel::uniform(0, hi, seed).unwrap());
        c.consistency = c.consistency.with_read_my_writes(rmw);
        let out = run(&w, &c).unwrap();
        let s = model.staleness().unwrap();
        let audit = ssp_safety_audit(&out.metrics.reads, &out.metrics.apply_log, p, s);
        prop_assert_eq!(audit.violations, 0);
        prop_assert_eq!(out.trace.len(), p * 15);
        let mut x = out.initial_params.clone();
        for snap in &out.trace {
            for (r, d) in &snap.update {
                for (a, v) in x.get_mut(r).unwrap().iter_mut().zip(d) {
                    *a += v;
                }
            }
        }
        prop_assert!(close(&out.final_params, &x, 1e-9));
        for r in &out.metrics.reads {
            prop_assert!(r.differential <= -1);
            prop_assert!(r.differential >= -(s as i64) - 1);
        }
    }
}
