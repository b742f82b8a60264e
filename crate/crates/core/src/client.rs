//! Per-worker client: a row cache in front of the server shards.
//!
//! A cache entry is an exact copy of the server row at some shard version.
//! The value a worker reads is derived from it on demand: with read-my-writes
//! on, the worker's own batches that the copy does not yet include are added
//! back, followed by the current clock's buffered increments.

use std::collections::{BTreeMap, BTreeSet};

use crate::coalesce::{coalesce, coalesce_row};
use crate::error::{Error, Result};
use crate::server::{shard_of, Outgoing};
use crate::transport::{Endpoint, OwnApplied, Payload};
use crate::types::{add_into, ConsistencyConfig, ParamRow, RowKey, Update};

/// Whether a row can be served right now.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadState {
    Ready,
    /// Cached, but its clock is too old for the staleness bound.
    Stale,
    Missing,
}

/// A successful read.
#[derive(Debug, Clone, PartialEq)]
pub struct Read {
    pub values: Vec<f64>,
    pub c_param: u64,
    pub version: u64,
}

#[derive(Debug, Clone)]
struct CacheEntry {
    snap: ParamRow,
    recency: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClientStats {
    pub gets: u64,
    pub requests: u64,
    pub replies: u64,
    pub pushes_applied: u64,
    pub pushes_dropped: u64,
    pub evictions: u64,
}

#[derive(Debug, Clone)]
pub struct ClientCache {
    worker: usize,
    shards: usize,
    width: usize,
    config: ConsistencyConfig,
    capacity: Option<usize>,
    c_worker: u64,
    entries: BTreeMap<RowKey, CacheEntry>,
    lru: BTreeMap<u64, RowKey>,
    counter: u64,
    buffer: BTreeMap<RowKey, Vec<Vec<f64>>>,
    /// Sent batches per row, by clock, until a server copy is known to include them.
    pending: BTreeMap<RowKey, BTreeMap<u64, Vec<f64>>>,
    outstanding: BTreeSet<RowKey>,
    registered: BTreeSet<RowKey>,
    stats: ClientStats,
}

impl ClientCache {
    pub fn new(worker: usize, shards: usize, width: usize, config: ConsistencyConfig) -> Self {
        ClientCache {
            worker,
            shards: shards.max(1),
            width,
            config,
            capacity: None,
            c_worker: 0,
            entries: BTreeMap::new(),
            lru: BTreeMap::new(),
            counter: 0,
            buffer: BTreeMap::new(),
            pending: BTreeMap::new(),
            outstanding: BTreeSet::new(),
            registered: BTreeSet::new(),
            stats: ClientStats::default(),
        }
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = Some(capacity.max(1));
        self
    }

    pub fn worker(&self) -> usize {
        self.worker
    }

    pub fn c_worker(&self) -> u64 {
        self.c_worker
    }

    pub fn config(&self) -> &ConsistencyConfig {
        &self.config
    }

    pub fn stats(&self) -> &ClientStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, row: RowKey) -> bool {
        self.entries.contains_key(&row)
    }

    pub fn cached(&self, row: RowKey) -> Option<&ParamRow> {
        self.entries.get(&row).map(|e| &e.snap)
    }

    pub fn snapshot_version(&self, row: RowKey) -> Option<u64> {
        self.entries.get(&row).map(|e| e.snap.version)
    }

    pub fn has_outstanding(&self, row: RowKey) -> bool {
        self.outstanding.contains(&row)
    }

    /// Whether the server is known to push this row to us.
    pub fn is_registered(&self, row: RowKey) -> bool {
        self.registered.contains(&row)
    }

    pub fn has_buffered(&self, row: RowKey) -> bool {
        self.buffer.contains_key(&row)
    }

    pub fn state(&self, row: RowKey) -> ReadState {
        let Some(e) = self.entries.get(&row) else {
            return ReadState::Missing;
        };
        match self.config.model.staleness() {
            // c_param counts fully applied clocks, so clocks <= c - s - 1 are in
            // the copy exactly when c_param >= c - s.
            Some(s) if e.snap.c_param + s < self.c_worker => ReadState::Stale,
            _ => ReadState::Ready,
        }
    }

    /// The value this worker would read for `row`, ignoring the staleness gate.
    pub fn view(&self, row: RowKey) -> Option<Vec<f64>> {
        let e = self.entries.get(&row)?;
        let mut values = e.snap.values.clone();
        if self.config.read_my_writes {
            if let Some(p) = self.pending.get(&row) {
                for d in p.values() {
                    add_into(row, &mut values, d).ok()?;
                }
            }
            if let Some(b) = self.buffer.get(&row) {
                let refs: Vec<&[f64]> = b.iter().map(|d| d.as_slice()).collect();
                let sum = coalesce_row(row, &refs).ok()?;
                add_into(row, &mut values, &sum).ok()?;
            }
        }
        Some(values)
    }

    /// GET: returns the row if the gate allows it, touching LRU recency.
    pub fn get(&mut self, row: RowKey) -> Option<Read> {
        if self.state(row) != ReadState::Ready {
            return None;
        }
        let values = self.view(row)?;
        self.touch(row);
        self.stats.gets += 1;
        let snap = &self.entries[&row].snap;
        Some(Read { values, c_param: snap.c_param, version: snap.version })
    }

    /// Builds a read request unless one is already in flight for `row`.
    pub fn request(&mut self, row: RowKey) -> Option<(Endpoint, Payload)> {
        if !self.outstanding.insert(row) {
            return None;
        }
        self.stats.requests += 1;
        Some((
            Endpoint::Server(shard_of(row, self.shards)),
            Payload::ReadRequest { worker: self.worker, clock: self.c_worker, row },
        ))
    }

    /// INC: buffers a delta for the current clock.
    pub fn inc(&mut self, row: RowKey, delta: Vec<f64>) -> Result<()> {
        if delta.len() != self.width {
            return Err(Error::LengthMismatch { row, expected: self.width, got: delta.len() });
        }
        self.buffer.entry(row).or_default().push(delta);
        Ok(())
    }

    /// CLOCK: ships this clock's coalesced increments and a tick to every shard.
    /// Returns the coalesced batch together with the messages to send.
    pub fn clock(&mut self) -> Result<(Vec<Update>, Vec<Outgoing>)> {
        let clock = self.c_worker;
        let raw: Vec<Update> = std::mem::take(&mut self.buffer)
            .into_iter()
            .flat_map(|(row, ds)| ds.into_iter().map(move |d| (row, d)))
            .map(|(row, d)| Update::new(self.worker, clock, row, d))
            .collect();
        let batch = coalesce(&raw)?;
        let mut per_shard: Vec<Vec<Update>> = vec![Vec::new(); self.shards];
        for u in &batch {
            per_shard[shard_of(u.row, self.shards)].push(u.clone());
            if self.config.read_my_writes {
                self.pending.entry(u.row).or_default().insert(clock, u.delta.clone());
            }
        }
        let mut out = Vec::with_capacity(2 * self.shards);
        for (h, updates) in per_shard.into_iter().enumerate() {
            out.push((Endpoint::Server(h), Payload::IncBatch { worker: self.worker, clock, updates }));
            out.push((Endpoint::Server(h), Payload::ClockTick { worker: self.worker, clock }));
        }
        self.c_worker += 1;
        self.evict_lru();
        Ok((batch, out))
    }

    fn prune_pending(&mut self, row: RowKey, own: &OwnApplied) {
        if let Some(p) = self.pending.get_mut(&row) {
            p.retain(|c, _| !own.contains(*c));
            if p.is_empty() {
                self.pending.remove(&row);
            }
        }
    }

    fn install(&mut self, row: RowKey, data: ParamRow, own: &OwnApplied) -> bool {
        self.prune_pending(row, own);
        let newer = match self.entries.get(&row) {
            Some(e) => e.snap.is_older_than(&data),
            None => true,
        };
        if newer {
            let recency = self.entries.get(&row).map(|e| e.recency);
            if let Some(r) = recency {
                self.lru.remove(&r);
            }
            self.counter += 1;
            self.lru.insert(self.counter, row);
            self.entries.insert(row, CacheEntry { snap: data, recency: self.counter });
            self.evict_except(Some(row));
        }
        newer
    }

    /// Handles a read reply. A reply older than the cached copy is ignored.
    pub fn apply_reply(&mut self, row: RowKey, data: ParamRow, own: &OwnApplied) -> bool {
        self.outstanding.remove(&row);
        self.stats.replies += 1;
        if self.config.model.is_eager() || self.config.model.is_vap() {
            self.registered.insert(row);
        }
        self.install(row, data, own)
    }

    /// Handles a server push: replaces the copy only if the push is newer.
    pub fn apply_push(&mut self, row: RowKey, data: ParamRow, own: &OwnApplied) -> bool {
        let replaced = self.install(row, data, own);
        if replaced {
            self.stats.pushes_applied += 1;
        } else {
            self.stats.pushes_dropped += 1;
        }
        replaced
    }

    fn touch(&mut self, row: RowKey) {
        if let Some(e) = self.entries.get_mut(&row) {
            self.lru.remove(&e.recency);
            self.counter += 1;
            e.recency = self.counter;
            self.lru.insert(self.counter, row);
        }
    }

    /// Evicts least-recently-used rows down to capacity, skipping rows with
    /// buffered increments. If every row is pinned the cache stays oversized
    /// until the next CLOCK.
    pub fn evict_lru(&mut self) {
        self.evict_except(None);
    }

    // The row just installed is never the victim, or a full cache of pinned
    // rows would drop every reply before the read could use it.
    fn evict_except(&mut self, keep: Option<RowKey>) {
        let Some(cap) = self.capacity else { return };
        if self.entries.len() <= cap {
            return;
        }
        let victims: Vec<(u64, RowKey)> = self
            .lru
            .iter()
            .filter(|(_, row)| !self.buffer.contains_key(row) && Some(**row) != keep)
            .take(self.entries.len() - cap)
            .map(|(r, row)| (*r, *row))
            .collect();
        for (r, row) in victims {
            self.lru.remove(&r);
            self.entries.remove(&row);
            self.stats.evictions += 1;
        }
    }

    /// Rows currently cached, least recently used first.
    pub fn lru_order(&self) -> Vec<RowKey> {
        self.lru.values().copied().collect()
    }
}
