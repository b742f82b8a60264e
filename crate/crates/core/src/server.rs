//! Server shards and the VAP admission coordinator.
//!
//! A shard is a pure state machine: each handler consumes one incoming
//! message and returns the messages it wants sent. The simulator and the
//! threaded runtime both drive the same code.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::schedule::vap_threshold;
use crate::transport::{Endpoint, OwnApplied, Payload};
use crate::types::{ClockVector, ConsistencyModel, ParamRow, RowKey, Update};

/// Maps a row to the shard that owns it.
pub fn shard_of(row: RowKey, shards: usize) -> usize {
    if shards <= 1 {
        return 0;
    }
    // splitmix-style finalizer so consecutive keys spread across shards
    let mut z = row.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z % shards as u64) as usize
}

/// Outgoing message produced by a shard handler.
pub type Outgoing = (Endpoint, Payload);

#[derive(Debug, Clone, Default)]
struct OwnWatermark {
    below: u64,
    extra: BTreeSet<u64>,
}

impl OwnWatermark {
    fn contains(&self, clock: u64) -> bool {
        clock < self.below || self.extra.contains(&clock)
    }

    fn insert(&mut self, clock: u64) {
        if clock == self.below {
            self.below += 1;
            while self.extra.remove(&self.below) {
                self.below += 1;
            }
        } else {
            self.extra.insert(clock);
        }
    }

    fn to_payload(&self) -> OwnApplied {
        OwnApplied { below: self.below, extra: self.extra.iter().copied().collect() }
    }
}

/// One applied increment batch, for post-hoc auditing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApplyRecord {
    pub shard: usize,
    /// Shard version after this batch was applied.
    pub version: u64,
    pub worker: usize,
    pub clock: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShardStats {
    pub batches: u64,
    pub ticks: u64,
    pub reads: u64,
    pub pushes: u64,
    pub advances: u64,
    /// Callback registrations requested outside ESSP/VAP and ignored.
    pub ignored_registrations: u64,
}

#[derive(Debug, Clone)]
pub struct ServerShard {
    id: usize,
    workers: usize,
    model: ConsistencyModel,
    width: usize,
    rows: BTreeMap<RowKey, ParamRow>,
    ticks: ClockVector,
    table_clock: u64,
    callbacks: BTreeMap<RowKey, BTreeSet<usize>>,
    buffered_ticks: Vec<BTreeSet<u64>>,
    own: Vec<OwnWatermark>,
    version: u64,
    apply_log: Option<Vec<ApplyRecord>>,
    stats: ShardStats,
}

impl ServerShard {
    pub fn new(id: usize, workers: usize, model: ConsistencyModel, width: usize) -> Self {
        ServerShard {
            id,
            workers,
            model,
            width,
            rows: BTreeMap::new(),
            ticks: ClockVector::new(workers),
            table_clock: 0,
            callbacks: BTreeMap::new(),
            buffered_ticks: vec![BTreeSet::new(); workers],
            own: vec![OwnWatermark::default(); workers],
            version: 0,
            apply_log: None,
            stats: ShardStats::default(),
        }
    }

    /// Keeps a log of every applied batch for auditing.
    pub fn with_apply_log(mut self) -> Self {
        self.apply_log = Some(Vec::new());
        self
    }

    /// Seeds a row with its initial value `x0` (not counted as an update).
    pub fn preload(&mut self, row: RowKey, values: Vec<f64>) -> Result<()> {
        if values.len() != self.width {
            return Err(Error::LengthMismatch { row, expected: self.width, got: values.len() });
        }
        self.rows.insert(row, ParamRow::new(values));
        Ok(())
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn table_clock(&self) -> u64 {
        self.table_clock
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn rows(&self) -> &BTreeMap<RowKey, ParamRow> {
        &self.rows
    }

    pub fn row(&self, row: RowKey) -> Option<&ParamRow> {
        self.rows.get(&row)
    }

    pub fn callbacks(&self, row: RowKey) -> Option<&BTreeSet<usize>> {
        self.callbacks.get(&row)
    }

    pub fn stats(&self) -> &ShardStats {
        &self.stats
    }

    pub fn completed_clocks(&self) -> &ClockVector {
        &self.ticks
    }

    pub fn take_apply_log(&mut self) -> Vec<ApplyRecord> {
        self.apply_log.take().unwrap_or_default()
    }

    fn check_worker(&self, worker: usize) -> Result<()> {
        if worker >= self.workers {
            return Err(Error::Protocol(format!("worker {worker} out of range (P = {})", self.workers)));
        }
        Ok(())
    }

    fn snapshot(&self, row: RowKey) -> ParamRow {
        match self.rows.get(&row) {
            Some(r) => ParamRow { values: r.values.clone(), c_param: self.table_clock, version: self.version },
            None => ParamRow { values: vec![0.0; self.width], c_param: self.table_clock, version: self.version },
        }
    }

    /// Dispatches one incoming payload.
    pub fn handle(&mut self, payload: &Payload) -> Result<Vec<Outgoing>> {
        match payload {
            Payload::IncBatch { worker, clock, updates } => self.handle_inc_batch(*worker, *clock, updates),
            Payload::ClockTick { worker, clock } => self.handle_clock_tick(*worker, *clock),
            Payload::ReadRequest { worker, row, .. } => Ok(vec![self.handle_read_request(*worker, *row)?]),
            other => Err(Error::Protocol(format!("server cannot handle {:?}", other.kind()))),
        }
    }

    /// Adds each delta to its row. Rows never seen before start at zero.
    pub fn handle_inc_batch(&mut self, worker: usize, clock: u64, updates: &[Update]) -> Result<Vec<Outgoing>> {
        self.check_worker(worker)?;
        if self.own[worker].contains(clock) {
            return Err(Error::Protocol(format!("duplicate batch for worker {worker} clock {clock}")));
        }
        for u in updates {
            if u.delta.len() != self.width {
                return Err(Error::LengthMismatch { row: u.row, expected: self.width, got: u.delta.len() });
            }
        }
        for u in updates {
            let width = self.width;
            let row = self.rows.entry(u.row).or_insert_with(|| ParamRow::zeros(width));
            row.add_assign(u.row, &u.delta)?;
        }
        self.version += 1;
        self.stats.batches += 1;
        self.own[worker].insert(clock);
        if let Some(log) = self.apply_log.as_mut() {
            log.push(ApplyRecord { shard: self.id, version: self.version, worker, clock });
        }

        let mut out = Vec::new();
        if self.model.is_vap() {
            // VAP has no clock gate, so rows are pushed as soon as they change.
            let touched: BTreeSet<RowKey> = updates.iter().map(|u| u.row).collect();
            self.push_rows(touched.into_iter(), &mut out);
        }
        self.drain_ticks(worker, &mut out);
        Ok(out)
    }

    /// Records a clock tick. A tick whose batch has not arrived yet (or that
    /// overtook an earlier tick) is buffered until it can be applied in order.
    pub fn handle_clock_tick(&mut self, worker: usize, clock: u64) -> Result<Vec<Outgoing>> {
        self.check_worker(worker)?;
        if clock < self.ticks.get(worker) || !self.buffered_ticks[worker].insert(clock) {
            return Err(Error::Protocol(format!("duplicate tick for worker {worker} clock {clock}")));
        }
        self.stats.ticks += 1;
        let mut out = Vec::new();
        self.drain_ticks(worker, &mut out);
        Ok(out)
    }

    fn drain_ticks(&mut self, worker: usize, out: &mut Vec<Outgoing>) {
        let before = self.ticks.min_clock();
        loop {
            let next = self.ticks.get(worker);
            if self.own[worker].contains(next) && self.buffered_ticks[worker].remove(&next) {
                self.ticks.tick(worker);
            } else {
                break;
            }
        }
        let after = self.ticks.min_clock();
        if after > before {
            self.advance(after, out);
        }
    }

    fn advance(&mut self, new_clock: u64, out: &mut Vec<Outgoing>) {
        debug_assert!(new_clock > self.table_clock);
        self.table_clock = new_clock;
        self.stats.advances += 1;
        for row in self.rows.values_mut() {
            row.c_param = new_clock;
        }
        if self.model.is_eager() {
            let rows: Vec<RowKey> = self.callbacks.keys().copied().collect();
            self.push_rows(rows.into_iter(), out);
        }
    }

    fn push_rows(&mut self, rows: impl Iterator<Item = RowKey>, out: &mut Vec<Outgoing>) {
        for row in rows {
            let Some(clients) = self.callbacks.get(&row) else { continue };
            let clients: Vec<usize> = clients.iter().copied().collect();
            let data = self.snapshot(row);
            for c in clients {
                out.push((
                    Endpoint::Client(c),
                    Payload::PushRow { row, data: data.clone(), own: self.own[c].to_payload() },
                ));
                self.stats.pushes += 1;
            }
        }
    }

    /// Replies with the current row state; under ESSP/VAP also registers the callback.
    pub fn handle_read_request(&mut self, worker: usize, row: RowKey) -> Result<Outgoing> {
        self.check_worker(worker)?;
        self.stats.reads += 1;
        self.register_callback(worker, row);
        Ok((
            Endpoint::Client(worker),
            Payload::ReadReply { row, data: self.snapshot(row), own: self.own[worker].to_payload() },
        ))
    }

    /// Idempotent. Outside ESSP/VAP it does nothing and is counted.
    pub fn register_callback(&mut self, worker: usize, row: RowKey) {
        if self.model.is_eager() || self.model.is_vap() {
            self.callbacks.entry(row).or_default().insert(worker);
        } else {
            self.stats.ignored_registrations += 1;
        }
    }
}

/// Answers visibility questions about client caches for the coordinator.
pub trait ViewProbe {
    /// Shard version of `worker`'s cached copy of `row`, if cached.
    fn snapshot_version(&self, worker: usize, row: RowKey) -> Option<u64>;
    /// Whether workers see their own unapplied writes.
    fn read_my_writes(&self) -> bool;
    fn shard_of(&self, row: RowKey) -> usize;
    fn workers(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admit,
    Defer,
}

/// One admitted VAP step: the view it read and the update it produced, in
/// generation order. The list of these is the real-time update sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct VapRecord {
    pub gen: u64,
    pub worker: usize,
    pub clock: u64,
    pub time: u64,
    pub view: Vec<(RowKey, Vec<f64>)>,
    pub delta: Vec<(RowKey, Vec<f64>)>,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
struct InTransit {
    worker: usize,
    clock: u64,
    delta: Vec<(RowKey, Vec<f64>)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoordinatorStats {
    pub admitted: u64,
    pub deferred: u64,
}

/// Omniscient admission controller enforcing the value bound on in-transit updates.
#[derive(Debug, Clone)]
pub struct VapCoordinator {
    v0: f64,
    enabled: bool,
    xhat: BTreeMap<RowKey, Vec<f64>>,
    generated: u64,
    ledger: Vec<InTransit>,
    /// (worker, clock, shard) -> shard version at which that batch was applied
    applied: BTreeMap<(usize, u64, usize), u64>,
    deferred: VecDeque<usize>,
    records: Vec<VapRecord>,
    stats: CoordinatorStats,
}

impl VapCoordinator {
    pub fn new(v0: f64, x0: BTreeMap<RowKey, Vec<f64>>) -> Self {
        VapCoordinator {
            v0,
            enabled: true,
            xhat: x0,
            generated: 0,
            ledger: Vec::new(),
            applied: BTreeMap::new(),
            deferred: VecDeque::new(),
            records: Vec::new(),
            stats: CoordinatorStats::default(),
        }
    }

    /// Test hook: admit everything (fully asynchronous execution).
    pub fn disabled(mut self) -> Self {
        self.enabled = false;
        self
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    /// 1-based index of the next update in the real-time sequence.
    pub fn global_t(&self) -> u64 {
        self.generated + 1
    }

    pub fn threshold(&self) -> f64 {
        vap_threshold(self.global_t(), self.v0).expect("t >= 1 and v0 > 0")
    }

    pub fn xhat(&self) -> &BTreeMap<RowKey, Vec<f64>> {
        &self.xhat
    }

    pub fn stats(&self) -> &CoordinatorStats {
        &self.stats
    }

    pub fn records(&self) -> &[VapRecord] {
        &self.records
    }

    pub fn take_records(&mut self) -> Vec<VapRecord> {
        std::mem::take(&mut self.records)
    }

    pub fn on_applied(&mut self, worker: usize, clock: u64, shard: usize, version: u64) {
        self.applied.insert((worker, clock, shard), version);
    }

    fn seen_by(&self, e: &InTransit, q: usize, probe: &dyn ViewProbe) -> Option<bool> {
        if q == e.worker && probe.read_my_writes() {
            return Some(true);
        }
        let mut any_cached = false;
        for (row, _) in &e.delta {
            let shard = probe.shard_of(*row);
            let Some(snap) = probe.snapshot_version(q, *row) else { continue };
            any_cached = true;
            match self.applied.get(&(e.worker, e.clock, shard)) {
                Some(&v) if snap >= v => {}
                _ => return Some(false),
            }
        }
        any_cached.then_some(true)
    }

    fn still_in_transit(&self, e: &InTransit, probe: &dyn ViewProbe) -> bool {
        let applied_everywhere =
            e.delta.iter().all(|(row, _)| self.applied.contains_key(&(e.worker, e.clock, probe.shard_of(*row))));
        if !applied_everywhere {
            return true;
        }
        (0..probe.workers()).any(|q| self.seen_by(e, q, probe) == Some(false))
    }

    /// Drops ledger entries that every worker caching their rows can now see.
    fn prune(&mut self, probe: &dyn ViewProbe) {
        let ledger = std::mem::take(&mut self.ledger);
        self.ledger = ledger.into_iter().filter(|e| self.still_in_transit(e, probe)).collect();
    }

    /// Per-worker aggregated in-transit deltas (`u_p` summed over its in-transit updates).
    pub fn in_transit(&mut self, probe: &dyn ViewProbe) -> BTreeMap<usize, BTreeMap<RowKey, Vec<f64>>> {
        self.prune(probe);
        let mut agg: BTreeMap<usize, BTreeMap<RowKey, Vec<f64>>> = BTreeMap::new();
        for e in &self.ledger {
            let rows = agg.entry(e.worker).or_default();
            for (row, d) in &e.delta {
                let acc = rows.entry(*row).or_insert_with(|| vec![0.0; d.len()]);
                for (a, v) in acc.iter_mut().zip(d) {
                    *a += v;
                }
            }
        }
        agg
    }

    /// Decides whether `worker` may compute on `view` now. Both the per-worker
    /// in-transit aggregates and the requester's deviation from the real-time
    /// sequence must stay within `v_t` in the max-norm.
    pub fn admit(&mut self, view: &[(RowKey, Vec<f64>)], probe: &dyn ViewProbe) -> Admission {
        if !self.enabled {
            self.stats.admitted += 1;
            return Admission::Admit;
        }
        let v_t = self.threshold();
        let view_ok = view.iter().all(|(row, vals)| match self.xhat.get(row) {
            Some(xh) => vals.iter().zip(xh).all(|(a, b)| (a - b).abs() <= v_t),
            None => vals.iter().all(|a| a.abs() <= v_t),
        });
        let transit_ok = view_ok
            && self.in_transit(probe).values().all(|rows| rows.values().all(|d| d.iter().all(|x| x.abs() <= v_t)));
        if transit_ok {
            self.stats.admitted += 1;
            Admission::Admit
        } else {
            Admission::Defer
        }
    }

    /// Appends an admitted step's update to the real-time sequence.
    pub fn record_generation(
        &mut self,
        worker: usize,
        clock: u64,
        time: u64,
        view: Vec<(RowKey, Vec<f64>)>,
        delta: Vec<(RowKey, Vec<f64>)>,
    ) {
        let threshold = self.threshold();
        for (row, d) in &delta {
            let xh = self.xhat.entry(*row).or_insert_with(|| vec![0.0; d.len()]);
            for (a, v) in xh.iter_mut().zip(d) {
                *a += v;
            }
        }
        self.generated += 1;
        self.ledger.push(InTransit { worker, clock, delta: delta.clone() });
        self.records.push(VapRecord { gen: self.generated, worker, clock, time, view, delta, threshold });
    }

    pub fn defer(&mut self, worker: usize) {
        self.stats.deferred += 1;
        self.deferred.push_back(worker);
    }

    pub fn deferred(&self) -> impl Iterator<Item = &usize> {
        self.deferred.iter()
    }

    pub fn has_deferred(&self) -> bool {
        !self.deferred.is_empty()
    }

    /// Removes and returns the deferred queue, oldest first.
    pub fn take_deferred(&mut self) -> VecDeque<usize> {
        std::mem::take(&mut self.deferred)
    }

    /// Puts back requests that are still not admissible ahead of any deferred
    /// since the queue was taken, keeping FIFO order.
    pub fn restore_deferred(&mut self, mut rest: VecDeque<usize>) {
        rest.extend(self.deferred.drain(..));
        self.deferred = rest;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(row: u64, d: &[f64]) -> Update {
        Update::new(0, 0, RowKey(row), d.to_vec())
    }

    fn ssp(s: u64) -> ConsistencyModel {
        ConsistencyModel::Ssp { staleness: s }
    }

    #[test]
    fn inc_batch_adds() {
        let mut sh = ServerShard::new(0, 1, ssp(0), 1);
        sh.preload(RowKey(0), vec![1.0]).unwrap();
        sh.handle_inc_batch(0, 0, &[u(0, &[0.5])]).unwrap();
        assert_eq!(sh.row(RowKey(0)).unwrap().values, vec![1.5]);
    }

    #[test]
    fn inc_batch_creates_missing_rows() {
        let mut sh = ServerShard::new(0, 1, ssp(0), 2);
        sh.handle_inc_batch(0, 0, &[u(4, &[1.0, -1.0])]).unwrap();
        assert_eq!(sh.row(RowKey(4)).unwrap().values, vec![1.0, -1.0]);
    }

    #[test]
    fn opposite_batches_commute() {
        for order in [[0u64, 1], [1, 0]] {
            let mut sh = ServerShard::new(0, 1, ssp(0), 1);
            sh.preload(RowKey(0), vec![2.0]).unwrap();
            for c in order {
                let d = if c == 0 { 1.0 } else { -1.0 };
                sh.handle_inc_batch(0, c, &[u(0, &[d])]).unwrap();
            }
            assert_eq!(sh.row(RowKey(0)).unwrap().values, vec![2.0]);
        }
    }

    #[test]
    fn length_mismatch_is_fatal() {
        let mut sh = ServerShard::new(0, 1, ssp(0), 2);
        assert!(matches!(sh.handle_inc_batch(0, 0, &[u(0, &[1.0])]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn table_clock_follows_slowest_worker() {
        let mut sh = ServerShard::new(0, 2, ssp(1), 1);
        sh.handle_inc_batch(0, 0, &[]).unwrap();
        sh.handle_clock_tick(0, 0).unwrap();
        assert_eq!(sh.table_clock(), 0);
        sh.handle_inc_batch(1, 0, &[]).unwrap();
        sh.handle_clock_tick(1, 0).unwrap();
        assert_eq!(sh.table_clock(), 1);

        let mut sh = ServerShard::new(0, 2, ssp(1), 1);
        for c in 0..2 {
            sh.handle_inc_batch(0, c, &[]).unwrap();
            sh.handle_clock_tick(0, c).unwrap();
        }
        assert_eq!(sh.table_clock(), 0);
    }

    #[test]
    fn early_tick_waits_for_its_batch() {
        let mut sh = ServerShard::new(0, 1, ssp(0), 1);
        sh.handle_clock_tick(0, 0).unwrap();
        assert_eq!(sh.table_clock(), 0);
        sh.handle_clock_tick(0, 1).unwrap();
        sh.handle_inc_batch(0, 1, &[]).unwrap();
        assert_eq!(sh.table_clock(), 0);
        sh.handle_inc_batch(0, 0, &[]).unwrap();
        assert_eq!(sh.table_clock(), 2);
    }

    #[test]
    fn duplicate_tick_is_fatal() {
        let mut sh = ServerShard::new(0, 1, ssp(0), 1);
        sh.handle_inc_batch(0, 0, &[]).unwrap();
        sh.handle_clock_tick(0, 0).unwrap();
        assert!(sh.handle_clock_tick(0, 0).is_err());
        sh.handle_clock_tick(0, 2).unwrap();
        assert!(sh.handle_clock_tick(0, 2).is_err());
        assert!(sh.handle_inc_batch(0, 0, &[]).is_err());
    }

    #[test]
    fn read_reply_carries_table_clock() {
        let mut sh = ServerShard::new(0, 1, ssp(0), 1);
        for c in 0..3 {
            sh.handle_inc_batch(0, c, &[]).unwrap();
            sh.handle_clock_tick(0, c).unwrap();
        }
        let (dst, p) = sh.handle_read_request(0, RowKey(0)).unwrap();
        assert_eq!(dst, Endpoint::Client(0));
        let Payload::ReadReply { data, .. } = p else { panic!() };
        assert_eq!(data.c_param, 3);
        assert_eq!(data.values, vec![0.0]);
    }

    #[test]
    fn essp_registers_callbacks_once() {
        let mut sh = ServerShard::new(0, 2, ConsistencyModel::Essp { staleness: 1 }, 1);
        sh.handle_read_request(0, RowKey(7)).unwrap();
        assert_eq!(sh.callbacks(RowKey(7)).unwrap().len(), 1);
        sh.handle_read_request(0, RowKey(7)).unwrap();
        assert_eq!(sh.callbacks(RowKey(7)).unwrap().len(), 1);
        sh.register_callback(1, RowKey(7));
        sh.register_callback(1, RowKey(7));
        assert_eq!(sh.callbacks(RowKey(7)).unwrap().iter().copied().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn ssp_ignores_registration() {
        let mut sh = ServerShard::new(0, 2, ssp(1), 1);
        sh.handle_read_request(0, RowKey(7)).unwrap();
        assert!(sh.callbacks(RowKey(7)).is_none());
        assert_eq!(sh.stats().ignored_registrations, 1);
    }

    #[test]
    fn essp_pushes_every_registered_pair_on_advance() {
        let mut sh = ServerShard::new(0, 2, ConsistencyModel::Essp { staleness: 1 }, 1);
        for r in [5, 1, 3] {
            for w in [1, 0] {
                sh.handle_read_request(w, RowKey(r)).unwrap();
            }
        }
        sh.handle_inc_batch(0, 0, &[]).unwrap();
        assert!(sh.handle_clock_tick(0, 0).unwrap().is_empty());
        sh.handle_inc_batch(1, 0, &[]).unwrap();
        let out = sh.handle_clock_tick(1, 0).unwrap();
        assert_eq!(out.len(), 6);
        let order: Vec<(u64, Endpoint)> = out
            .iter()
            .map(|(dst, p)| match p {
                Payload::PushRow { row, data, .. } => {
                    assert_eq!(data.c_param, 1);
                    (row.0, *dst)
                }
                _ => panic!(),
            })
            .collect();
        assert_eq!(
            order,
            vec![
                (1, Endpoint::Client(0)),
                (1, Endpoint::Client(1)),
                (3, Endpoint::Client(0)),
                (3, Endpoint::Client(1)),
                (5, Endpoint::Client(0)),
                (5, Endpoint::Client(1)),
            ]
        );
    }

    #[test]
    fn own_applied_tracks_out_of_order_batches() {
        let mut sh = ServerShard::new(0, 1, ssp(5), 1);
        sh.handle_inc_batch(0, 1, &[]).unwrap();
        let (_, Payload::ReadReply { own, .. }) = sh.handle_read_request(0, RowKey(0)).unwrap() else { panic!() };
        assert_eq!(own, OwnApplied { below: 0, extra: vec![1] });
        sh.handle_inc_batch(0, 0, &[]).unwrap();
        let (_, Payload::ReadReply { own, .. }) = sh.handle_read_request(0, RowKey(0)).unwrap() else { panic!() };
        assert_eq!(own, OwnApplied { below: 2, extra: vec![] });
    }

    #[test]
    fn shard_of_is_stable_and_in_range() {
        for r in 0..1000 {
            let s = shard_of(RowKey(r), 4);
            assert!(s < 4);
            assert_eq!(s, shard_of(RowKey(r), 4));
            assert_eq!(shard_of(RowKey(r), 1), 0);
        }
    }

    struct Probe {
        versions: BTreeMap<(usize, RowKey), u64>,
        workers: usize,
    }

    impl ViewProbe for Probe {
        fn snapshot_version(&self, worker: usize, row: RowKey) -> Option<u64> {
            self.versions.get(&(worker, row)).copied()
        }
        fn read_my_writes(&self) -> bool {
            false
        }
        fn shard_of(&self, _row: RowKey) -> usize {
            0
        }
        fn workers(&self) -> usize {
            self.workers
        }
    }

    fn x0() -> BTreeMap<RowKey, Vec<f64>> {
        [(RowKey(0), vec![0.0, 0.0])].into_iter().collect()
    }

    #[test]
    fn vap_admits_when_nothing_in_transit() {
        let mut c = VapCoordinator::new(0.5, x0());
        let probe = Probe { versions: [((0, RowKey(0)), 0)].into_iter().collect(), workers: 2 };
        assert_eq!(c.admit(&[(RowKey(0), vec![0.0, 0.0])], &probe), Admission::Admit);
    }

    #[test]
    fn vap_defers_strict_violation() {
        let mut c = VapCoordinator::new(0.5, x0());
        let mut probe =
            Probe { versions: [((0, RowKey(0)), 0), ((1, RowKey(0)), 0)].into_iter().collect(), workers: 2 };
        c.record_generation(1, 0, 0, vec![(RowKey(0), vec![0.0, 0.0])], vec![(RowKey(0), vec![0.0, 0.1])]);
        // v_2 = 0.5 / sqrt(2) ~ 0.354; an in-transit component of v_t + eps must defer.
        let v2 = c.threshold();
        let mut c2 = VapCoordinator::new(0.5, x0());
        c2.record_generation(1, 0, 0, vec![], vec![(RowKey(0), vec![0.0, v2 + 1e-9])]);
        assert_eq!(c2.admit(&[(RowKey(0), vec![0.0, 0.0])], &probe), Admission::Defer);
        // 0.1 is within the bound
        assert_eq!(c.admit(&[(RowKey(0), vec![0.0, 0.0])], &probe), Admission::Admit);
        // once applied and seen by everyone it leaves the ledger
        c2.on_applied(1, 0, 0, 1);
        probe.versions.insert((0, RowKey(0)), 1);
        probe.versions.insert((1, RowKey(0)), 1);
        assert!(c2.in_transit(&probe).is_empty());
        assert_eq!(c2.admit(&[(RowKey(0), vec![0.0, v2 + 1e-9])], &probe), Admission::Admit);
    }

    #[test]
    fn disabled_coordinator_always_admits() {
        let mut c = VapCoordinator::new(1e-12, x0()).disabled();
        let probe = Probe { versions: BTreeMap::new(), workers: 1 };
        c.record_generation(0, 0, 0, vec![], vec![(RowKey(0), vec![5.0, 5.0])]);
        assert_eq!(c.admit(&[(RowKey(0), vec![0.0, 0.0])], &probe), Admission::Admit);
    }
}
