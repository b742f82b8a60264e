//! Deterministic discrete-event execution of a workload against the
//! parameter server.
//!
//! Workers, shards and the network share one virtual clock. Every step reads
//! its rows through the worker's cache (blocking on the consistency gate),
//! computes, and buffers its increments; a worker's clock ends after its
//! minibatch. Given the same configuration and seeds, a run is bit-for-bit
//! reproducible.

use std::collections::VecDeque;

use crate::client::{ClientCache, ReadState};
use crate::error::{Error, Result};
use crate::metrics::{MetricsLog, ObjectivePoint, ReadStalenessSample, TimeBreakdown};
use crate::server::{shard_of, Admission, ServerShard, VapCoordinator, VapRecord, ViewProbe};
use crate::transport::{DelayModel, Endpoint, Event, EventRecord, MessageKind, Network, Payload, VirtualTime};
use crate::types::{ConsistencyConfig, RowKey};
use crate::workloads::{attach_reference, is_diverged, Params, TraceSnapshot, Workload, DIVERGENCE_FACTOR};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub consistency: ConsistencyConfig,
    pub workers: usize,
    pub clocks: u64,
    pub shards: usize,
    pub delays: DelayModel,
    /// Virtual time one SGD step takes.
    pub compute_ticks: u64,
    /// Back-off before re-requesting a row whose refreshed copy was still too stale.
    pub retry_ticks: u64,
    /// Client cache capacity in rows; `None` is unbounded.
    pub cache_capacity: Option<usize>,
    pub record_trace: bool,
    pub record_events: bool,
    /// When false the VAP coordinator admits everything.
    pub vap_coordinator: bool,
    pub divergence_factor: f64,
}

impl RunConfig {
    pub fn new(consistency: ConsistencyConfig, workers: usize, clocks: u64) -> Self {
        RunConfig {
            consistency,
            workers,
            clocks,
            shards: 1,
            delays: DelayModel::zero(),
            compute_ticks: 10,
            retry_ticks: 1,
            cache_capacity: None,
            record_trace: true,
            record_events: false,
            vap_coordinator: true,
            divergence_factor: DIVERGENCE_FACTOR,
        }
    }

    pub fn with_shards(mut self, shards: usize) -> Self {
        self.shards = shards;
        self
    }

    pub fn with_delays(mut self, delays: DelayModel) -> Self {
        self.delays = delays;
        self
    }

    pub fn with_compute_ticks(mut self, ticks: u64) -> Self {
        self.compute_ticks = ticks;
        self
    }

    pub fn with_capacity(mut self, rows: usize) -> Self {
        self.cache_capacity = Some(rows);
        self
    }

    pub fn with_event_trace(mut self) -> Self {
        self.record_events = true;
        self
    }

    pub fn without_trace(mut self) -> Self {
        self.record_trace = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::NoWorkers);
        }
        if self.shards == 0 {
            return Err(Error::Config("need at least one server shard".into()));
        }
        if self.retry_ticks == 0 {
            return Err(Error::Config("retry_ticks must be >= 1".into()));
        }
        if self.cache_capacity == Some(0) {
            return Err(Error::Config("cache capacity must be >= 1 row".into()));
        }
        if let Some(v0) = self.consistency.model.vap_v0() {
            if !(v0 > 0.0 && v0.is_finite()) {
                return Err(Error::Config(format!("VAP v0 must be positive, got {v0}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Per-(worker, clock) snapshots in clock-major order, with `x_ref` filled in.
    pub trace: Vec<TraceSnapshot>,
    pub metrics: MetricsLog,
    pub initial_params: Params,
    pub final_params: Params,
    pub initial_objective: f64,
    pub diverged: bool,
    pub vap_records: Vec<VapRecord>,
    pub events: Option<Vec<EventRecord>>,
}

impl RunOutput {
    pub fn final_objective(&self) -> Option<f64> {
        self.metrics.objective.last().map(|p| p.objective)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Local {
    /// The current step's compute finished.
    Wake(usize),
    /// Back-off expired; re-request the row the worker is blocked on.
    Retry(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Reading,
    Deferred,
    Computing,
    Done,
}

struct WorkerCtx {
    phase: Phase,
    clock: u64,
    items: Vec<usize>,
    item_idx: usize,
    rows: Vec<RowKey>,
    views: Vec<Vec<f64>>,
    /// A request may be sent for the blocking row without waiting for a retry.
    may_ask: bool,
    retry_pending: bool,
    clock_start: VirtualTime,
    snap: TraceSnapshot,
}

struct Probe<'a> {
    clients: &'a [ClientCache],
    shards: usize,
    rmw: bool,
}

impl ViewProbe for Probe<'_> {
    fn snapshot_version(&self, worker: usize, row: RowKey) -> Option<u64> {
        self.clients[worker].snapshot_version(row)
    }

    fn read_my_writes(&self) -> bool {
        self.rmw
    }

    fn shard_of(&self, row: RowKey) -> usize {
        shard_of(row, self.shards)
    }

    fn workers(&self) -> usize {
        self.clients.len()
    }
}

struct Engine<'w> {
    workload: &'w dyn Workload,
    cfg: RunConfig,
    items_per_clock: u64,
    net: Network<Local>,
    shards: Vec<ServerShard>,
    clients: Vec<ClientCache>,
    coordinator: Option<VapCoordinator>,
    workers: Vec<WorkerCtx>,
    trace: Vec<TraceSnapshot>,
    metrics: MetricsLog,
    initial_objective: f64,
    recorded_clock: u64,
    diverged: bool,
}

/// Runs `workload` on `cfg.workers` workers for `cfg.clocks` clocks.
pub fn run(workload: &dyn Workload, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut engine = Engine::new(workload, cfg.clone())?;
    engine.run()?;
    engine.finish()
}

impl<'w> Engine<'w> {
    fn new(workload: &'w dyn Workload, cfg: RunConfig) -> Result<Self> {
        let p = cfg.workers;
        let width = workload.width();
        let m = workload.items_per_clock(p)? as u64;
        let model = cfg.consistency.model;
        if model.is_vap() && m != 1 {
            return Err(Error::Config(format!(
                "VAP runs need one item per clock (got {m}); a worker's own buffered updates would block its admission"
            )));
        }
        let x0 = workload.initial_params();
        let (initial_objective, initial_sq) = workload.objective(&x0)?;

        let mut shards: Vec<ServerShard> =
            (0..cfg.shards).map(|h| ServerShard::new(h, p, model, width).with_apply_log()).collect();
        for (row, v) in &x0 {
            shards[shard_of(*row, cfg.shards)].preload(*row, v.clone())?;
        }
        let clients = (0..p)
            .map(|w| {
                let c = ClientCache::new(w, cfg.shards, width, cfg.consistency);
                match cfg.cache_capacity {
                    Some(cap) => c.with_capacity(cap),
                    None => c,
                }
            })
            .collect();
        let coordinator = model.vap_v0().map(|v0| {
            let c = VapCoordinator::new(v0, x0.clone());
            if cfg.vap_coordinator {
                c
            } else {
                c.disabled()
            }
        });
        let mut net = Network::new(cfg.delays.clone());
        if cfg.record_events {
            net = net.with_trace();
        }
        let workers = (0..p)
            .map(|w| WorkerCtx {
                phase: Phase::Done,
                clock: 0,
                items: Vec::new(),
                item_idx: 0,
                rows: Vec::new(),
                views: Vec::new(),
                may_ask: true,
                retry_pending: false,
                clock_start: 0,
                snap: TraceSnapshot::new(w as u64, w, 0),
            })
            .collect();
        let mut metrics = MetricsLog::default();
        metrics.objective.push(ObjectivePoint {
            clock: 0,
            time: 0,
            objective: initial_objective,
            squared_loss: initial_sq,
        });
        Ok(Engine {
            workload,
            cfg,
            items_per_clock: m,
            net,
            shards,
            clients,
            coordinator,
            workers,
            trace: Vec::new(),
            metrics,
            initial_objective,
            recorded_clock: 0,
            diverged: false,
        })
    }

    fn run(&mut self) -> Result<()> {
        if self.cfg.clocks > 0 {
            for w in 0..self.cfg.workers {
                self.begin_clock(w, 0)?;
            }
            for w in 0..self.cfg.workers {
                self.advance(w)?;
            }
            self.recheck_deferred()?;
        }
        while let Some((_, ev)) = self.net.next_event() {
            match ev {
                Event::Message(msg) => match msg.dst {
                    Endpoint::Server(h) => self.on_server(h, msg.payload)?,
                    Endpoint::Client(w) => self.on_client(w, msg.payload)?,
                    Endpoint::Coordinator => {
                        return Err(Error::Protocol("coordinator messages are resolved synchronously".into()))
                    }
                },
                Event::Local(Local::Wake(w)) => self.on_wake(w)?,
                Event::Local(Local::Retry(w)) => {
                    let ctx = &mut self.workers[w];
                    ctx.retry_pending = false;
                    ctx.may_ask = true;
                    if ctx.phase == Phase::Reading {
                        self.advance(w)?;
                    }
                }
            }
            if self.diverged {
                return Ok(());
            }
            self.recheck_deferred()?;
        }
        if let Some(w) = self.workers.iter().position(|c| c.phase != Phase::Done) {
            return Err(Error::Protocol(format!(
                "simulation stalled: worker {w} stuck at clock {} in {:?}",
                self.workers[w].clock, self.workers[w].phase
            )));
        }
        Ok(())
    }

    fn post_all(&mut self, src: Endpoint, out: Vec<(Endpoint, Payload)>) -> Result<()> {
        for (dst, payload) in out {
            self.net.post(src, dst, payload)?;
        }
        Ok(())
    }

    fn on_server(&mut self, h: usize, payload: Payload) -> Result<()> {
        let out = self.shards[h].handle(&payload)?;
        if let (Payload::IncBatch { worker, clock, .. }, Some(coord)) = (&payload, self.coordinator.as_mut()) {
            coord.on_applied(*worker, *clock, h, self.shards[h].version());
        }
        self.post_all(Endpoint::Server(h), out)?;
        if matches!(payload, Payload::ClockTick { .. } | Payload::IncBatch { .. }) {
            self.maybe_record_objective()?;
        }
        Ok(())
    }

    fn on_client(&mut self, w: usize, payload: Payload) -> Result<()> {
        match payload {
            Payload::ReadReply { row, data, own } => {
                self.clients[w].apply_reply(row, data, &own);
            }
            Payload::PushRow { row, data, own } => {
                self.clients[w].apply_push(row, data, &own);
            }
            other => return Err(Error::Protocol(format!("client cannot handle {:?}", other.kind()))),
        }
        if self.workers[w].phase == Phase::Reading {
            self.advance(w)?;
        }
        Ok(())
    }

    fn current_params(&self) -> Params {
        let mut x = Params::new();
        for s in &self.shards {
            for (r, v) in s.rows() {
                x.insert(*r, v.values.clone());
            }
        }
        x
    }

    fn maybe_record_objective(&mut self) -> Result<()> {
        let global = self.shards.iter().map(|s| s.table_clock()).min().unwrap_or(0);
        if global <= self.recorded_clock {
            return Ok(());
        }
        self.recorded_clock = global;
        let (obj, sq) = self.workload.objective(&self.current_params())?;
        self.metrics.objective.push(ObjectivePoint {
            clock: global,
            time: self.net.now(),
            objective: obj,
            squared_loss: sq,
        });
        if is_diverged(obj, self.initial_objective, self.cfg.divergence_factor) {
            self.diverged = true;
        }
        Ok(())
    }

    fn begin_clock(&mut self, w: usize, clock: u64) -> Result<()> {
        let items = self.workload.schedule(w, clock, self.cfg.workers)?;
        if items.len() as u64 != self.items_per_clock {
            return Err(Error::Shape(format!(
                "worker {w} clock {clock}: schedule has {} items, expected {}",
                items.len(),
                self.items_per_clock
            )));
        }
        let now = self.net.now();
        let ctx = &mut self.workers[w];
        ctx.clock = clock;
        ctx.items = items;
        ctx.clock_start = now;
        ctx.snap = TraceSnapshot::new(clock * self.cfg.workers as u64 + w as u64, w, clock);
        self.begin_step(w, 0);
        Ok(())
    }

    fn begin_step(&mut self, w: usize, idx: usize) {
        let ctx = &mut self.workers[w];
        ctx.item_idx = idx;
        ctx.rows = self.workload.rows_of(ctx.items[idx]);
        ctx.views.clear();
        ctx.may_ask = true;
        ctx.phase = Phase::Reading;
    }

    /// Makes as much progress as possible on worker `w`'s current read phase.
    fn advance(&mut self, w: usize) -> Result<()> {
        if self.workers[w].phase != Phase::Reading {
            return Ok(());
        }
        if self.cfg.consistency.model.is_vap() {
            return self.advance_vap(w);
        }
        let eager = self.cfg.consistency.model.is_eager();
        while self.workers[w].views.len() < self.workers[w].rows.len() {
            let row = self.workers[w].rows[self.workers[w].views.len()];
            if let Some(read) = self.clients[w].get(row) {
                self.sample(w, row, read.c_param, read.version);
                self.workers[w].views.push(read.values);
                self.workers[w].may_ask = true;
                continue;
            }
            let client = &self.clients[w];
            if client.has_outstanding(row) {
                return Ok(());
            }
            let must_fetch = match client.state(row) {
                ReadState::Missing => true,
                // an eager subscriber gets a push once the row is fresh enough
                ReadState::Stale => !(eager && client.is_registered(row)),
                ReadState::Ready => unreachable!("get succeeded above"),
            };
            if !must_fetch {
                return Ok(());
            }
            if self.workers[w].may_ask {
                self.workers[w].may_ask = false;
                if let Some((dst, payload)) = self.clients[w].request(row) {
                    self.net.post(Endpoint::Client(w), dst, payload)?;
                }
            } else if !self.workers[w].retry_pending {
                self.workers[w].retry_pending = true;
                let at = self.net.now() + self.cfg.retry_ticks;
                self.net.schedule_local(at, Local::Retry(w));
            }
            return Ok(());
        }
        self.compute(w)
    }

    fn advance_vap(&mut self, w: usize) -> Result<()> {
        let mut waiting = false;
        for i in 0..self.workers[w].rows.len() {
            let row = self.workers[w].rows[i];
            if !self.clients[w].contains(row) {
                waiting = true;
                if let Some((dst, payload)) = self.clients[w].request(row) {
                    self.net.post(Endpoint::Client(w), dst, payload)?;
                }
            }
        }
        if waiting {
            return Ok(());
        }
        if self.try_admit(w)? {
            self.compute(w)
        } else {
            self.workers[w].phase = Phase::Deferred;
            if let Some(c) = self.coordinator.as_mut() {
                c.defer(w);
            }
            Ok(())
        }
    }

    /// Asks the coordinator about worker `w`'s current view; on admission
    /// performs the reads.
    fn try_admit(&mut self, w: usize) -> Result<bool> {
        let rows = self.workers[w].rows.clone();
        let mut view = Vec::with_capacity(rows.len());
        for row in &rows {
            let Some(v) = self.clients[w].view(*row) else { return Ok(false) };
            view.push((*row, v));
        }
        let coord = self.coordinator.as_mut().expect("VAP run has a coordinator");
        let probe = Probe { clients: &self.clients, shards: self.cfg.shards, rmw: self.cfg.consistency.read_my_writes };
        let admission = coord.admit(&view, &probe);
        self.net.record_instant(Endpoint::Client(w), Endpoint::Coordinator, MessageKind::VapAdmitRequest);
        self.net.record_instant(Endpoint::Coordinator, Endpoint::Client(w), MessageKind::VapAdmitReply);
        if admission == Admission::Defer {
            return Ok(false);
        }
        for row in rows {
            let read = self.clients[w]
                .get(row)
                .ok_or_else(|| Error::Protocol(format!("VAP read of cached row {row:?} failed")))?;
            self.sample(w, row, read.c_param, read.version);
            self.workers[w].views.push(read.values);
        }
        Ok(true)
    }

    /// Re-evaluates deferred VAP requests in FIFO order until none can proceed.
    fn recheck_deferred(&mut self) -> Result<()> {
        let Some(coord) = self.coordinator.as_mut() else { return Ok(()) };
        if !coord.has_deferred() {
            return Ok(());
        }
        loop {
            let queue = self.coordinator.as_mut().expect("checked").take_deferred();
            let mut rest = VecDeque::new();
            let mut refetch = Vec::new();
            let mut progressed = false;
            for w in queue {
                let cached = self.workers[w].rows.iter().all(|r| self.clients[w].contains(*r));
                if !cached {
                    refetch.push(w);
                } else if self.try_admit(w)? {
                    self.compute(w)?;
                    progressed = true;
                } else {
                    rest.push_back(w);
                }
            }
            self.coordinator.as_mut().expect("checked").restore_deferred(rest);
            for w in refetch {
                self.workers[w].phase = Phase::Reading;
                self.advance(w)?;
            }
            if !progressed {
                return Ok(());
            }
        }
    }

    fn sample(&mut self, w: usize, row: RowKey, c_param: u64, version: u64) {
        let c_worker = self.clients[w].c_worker();
        let shard = shard_of(row, self.cfg.shards);
        self.metrics.reads.push(ReadStalenessSample::new(w, c_worker, c_param, row, shard, version));
    }

    fn compute(&mut self, w: usize) -> Result<()> {
        let p = self.cfg.workers as u64;
        let now = self.net.now();
        let ctx = &mut self.workers[w];
        let item = ctx.items[ctx.item_idx];
        let t = (ctx.clock * p + w as u64) * self.items_per_clock + ctx.item_idx as u64 + 1;
        let views = std::mem::take(&mut ctx.views);
        let out = self.workload.step(item, t, &views)?;
        if self.cfg.record_trace {
            ctx.snap.record_step(item, &ctx.rows, &views, &out);
        }
        let clock = ctx.clock;
        ctx.phase = Phase::Computing;
        if let Some(coord) = self.coordinator.as_mut() {
            let view = ctx.rows.iter().copied().zip(views).collect();
            coord.record_generation(w, clock, now, view, out.deltas.clone());
        }
        for (row, delta) in out.deltas {
            self.clients[w].inc(row, delta)?;
        }
        self.net.schedule_local(now + self.cfg.compute_ticks, Local::Wake(w));
        Ok(())
    }

    fn on_wake(&mut self, w: usize) -> Result<()> {
        let next = self.workers[w].item_idx + 1;
        if next < self.workers[w].items.len() {
            self.begin_step(w, next);
            return self.advance(w);
        }
        let (batch, out) = self.clients[w].clock()?;
        self.post_all(Endpoint::Client(w), out)?;
        let now = self.net.now();
        let compute = self.items_per_clock * self.cfg.compute_ticks;
        let ctx = &mut self.workers[w];
        let elapsed = now - ctx.clock_start;
        self.metrics.breakdown.push(TimeBreakdown {
            worker: w,
            clock: ctx.clock,
            compute_ticks: compute,
            wait_ticks: elapsed.saturating_sub(compute),
        });
        if self.cfg.record_trace {
            let mut snap = std::mem::replace(&mut ctx.snap, TraceSnapshot::new(0, w, 0));
            snap.time = now;
            snap.update = batch.into_iter().map(|u| (u.row, u.delta)).collect();
            self.trace.push(snap);
        }
        let next_clock = ctx.clock + 1;
        if next_clock < self.cfg.clocks {
            self.begin_clock(w, next_clock)?;
            self.advance(w)
        } else {
            ctx.phase = Phase::Done;
            Ok(())
        }
    }

    fn finish(mut self) -> Result<RunOutput> {
        let x0 = self.workload.initial_params();
        if self.cfg.record_trace {
            attach_reference(&mut self.trace, &x0);
        }
        let final_params = self.current_params();
        let mut metrics = self.metrics;
        for s in &mut self.shards {
            metrics.apply_log.extend(s.take_apply_log());
            metrics.shard_stats.push(s.stats().clone());
        }
        metrics.client_stats = self.clients.iter().map(|c| c.stats().clone()).collect();
        metrics.messages = self.net.sent();
        metrics.end_time = self.net.now();
        let vap_records = match self.coordinator.as_mut() {
            Some(c) => {
                metrics.coordinator = Some(c.stats().clone());
                c.take_records()
            }
            None => Vec::new(),
        };
        Ok(RunOutput {
            trace: self.trace,
            metrics,
            initial_params: x0,
            final_params,
            initial_objective: self.initial_objective,
            diverged: self.diverged,
            vap_records,
            events: self.net.take_trace(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::staleness_histogram;
    use crate::schedule::StepSchedule;
    use crate::types::ConsistencyModel;
    use crate::workloads::{sequential_oracle, LsqConfig, LsqWorkload};

    fn lsq(n: usize, d: usize, per_clock: usize) -> LsqWorkload {
        let (mut cfg, _) = LsqConfig::synthetic(n, d, 1.0, 0.1, 0.05, 7).unwrap();
        cfg.items_per_clock = per_clock;
        cfg.schedule = StepSchedule::new(0.05);
        LsqWorkload::new(cfg).unwrap()
    }

    fn cfg(model: ConsistencyModel, p: usize, clocks: u64) -> RunConfig {
        RunConfig::new(ConsistencyConfig::new(model), p, clocks)
    }

    #[test]
    fn single_worker_matches_oracle_bitwise() {
        let w = lsq(40, 5, 3);
        for model in
            [ConsistencyModel::Bsp, ConsistencyModel::Ssp { staleness: 2 }, ConsistencyModel::Essp { staleness: 1 }]
        {
            let out = run(&w, &cfg(model, 1, 30)).unwrap();
            let oracle = sequential_oracle(&w, 1, 30).unwrap();
            assert_eq!(out.final_params, oracle.final_params, "{model:?}");
            for (a, b) in out.trace.iter().zip(&oracle.trace) {
                assert_eq!(a.update, b.update);
            }
        }
    }

    #[test]
    fn bsp_reads_are_one_clock_behind() {
        let w = lsq(64, 4, 2);
        let out =
            run(&w, &cfg(ConsistencyModel::Bsp, 4, 20).with_delays(DelayModel::uniform(1, 9, 3).unwrap())).unwrap();
        let h = staleness_histogram(&out.metrics.reads, Some(0)).unwrap();
        assert!(h.is_point_mass_at(-1));
    }

    #[test]
    fn updates_are_conserved() {
        let w = lsq(64, 4, 2);
        let model = ConsistencyModel::Ssp { staleness: 3 };
        let out =
            run(&w, &cfg(model, 4, 25).with_shards(3).with_delays(DelayModel::uniform(0, 20, 5).unwrap())).unwrap();
        let mut x = out.initial_params.clone();
        for s in &out.trace {
            for (r, d) in &s.update {
                for (a, v) in x.get_mut(r).unwrap().iter_mut().zip(d) {
                    *a += v;
                }
            }
        }
        for (r, v) in &out.final_params {
            for (a, b) in v.iter().zip(&x[r]) {
                assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
        assert_eq!(out.trace.len(), 4 * 25);
    }

    #[test]
    fn runs_are_reproducible() {
        let w = lsq(64, 4, 2);
        let c = cfg(ConsistencyModel::Essp { staleness: 2 }, 4, 15)
            .with_delays(DelayModel::uniform(0, 15, 11).unwrap())
            .with_event_trace();
        let a = run(&w, &c).unwrap();
        let b = run(&w, &c).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.final_params, b.final_params);
        assert_eq!(a.metrics.reads, b.metrics.reads);
    }

    #[test]
    fn vap_requires_single_item_clocks() {
        let w = lsq(16, 3, 2);
        let err = run(&w, &cfg(ConsistencyModel::Vap { v0: 1.0 }, 2, 4)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn vap_run_completes_and_respects_bound() {
        let w = lsq(16, 3, 1);
        let out =
            run(&w, &cfg(ConsistencyModel::Vap { v0: 0.5 }, 3, 20).with_delays(DelayModel::uniform(1, 5, 2).unwrap()))
                .unwrap();
        assert_eq!(out.vap_records.len(), 60);
        let worst = crate::metrics::vap_audit(&out.vap_records, &out.initial_params).unwrap();
        assert!(worst <= 1e-12, "{worst}");
    }

    #[test]
    fn zero_clocks_is_a_no_op() {
        let w = lsq(8, 2, 1);
        let out = run(&w, &cfg(ConsistencyModel::Bsp, 2, 0)).unwrap();
        assert!(out.trace.is_empty());
        assert_eq!(out.final_params, out.initial_params);
    }
}
