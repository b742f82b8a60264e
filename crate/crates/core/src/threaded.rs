//! Soak-test runtime: one OS thread per shard and per worker, connected by
//! channels. Same shard and cache code as the simulator, but the event order
//! is whatever the scheduler produces, so runs are not reproducible. VAP needs
//! the omniscient coordinator and is not supported here.

use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use crate::client::{ClientCache, ReadState};
use crate::error::{Error, Result};
use crate::metrics::ReadStalenessSample;
use crate::server::{shard_of, ApplyRecord, ServerShard};
use crate::transport::{Endpoint, Payload};
use crate::types::{ConsistencyConfig, RowKey, Update};
use crate::workloads::{Params, Workload};

#[derive(Debug, Clone)]
pub struct ThreadedConfig {
    pub consistency: ConsistencyConfig,
    pub workers: usize,
    pub clocks: u64,
    pub shards: usize,
    /// A blocked read gives up after this long without progress.
    pub timeout: Duration,
    /// How long a worker waits for a push before re-requesting a stale row.
    pub retry: Duration,
}

impl ThreadedConfig {
    pub fn new(consistency: ConsistencyConfig, workers: usize, clocks: u64) -> Self {
        ThreadedConfig {
            consistency,
            workers,
            clocks,
            shards: 1,
            timeout: Duration::from_secs(30),
            retry: Duration::from_millis(1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThreadedOutput {
    pub initial_params: Params,
    pub final_params: Params,
    pub reads: Vec<ReadStalenessSample>,
    pub apply_log: Vec<ApplyRecord>,
    /// Every coalesced batch the workers sent.
    pub updates: Vec<Update>,
}

struct Worker<'a> {
    id: usize,
    cache: ClientCache,
    inbox: Receiver<Payload>,
    shards: Vec<Sender<Payload>>,
    cfg: &'a ThreadedConfig,
    reads: Vec<ReadStalenessSample>,
    updates: Vec<Update>,
}

impl Worker<'_> {
    fn send(&self, shard: usize, payload: Payload) -> Result<()> {
        self.shards[shard].send(payload).map_err(|_| Error::Protocol(format!("shard {shard} hung up")))
    }

    fn deliver(&mut self, payload: Payload) -> Result<()> {
        match payload {
            Payload::ReadReply { row, data, own } => {
                self.cache.apply_reply(row, data, &own);
            }
            Payload::PushRow { row, data, own } => {
                self.cache.apply_push(row, data, &own);
            }
            other => return Err(Error::Protocol(format!("client cannot handle {:?}", other.kind()))),
        }
        Ok(())
    }

    fn get(&mut self, row: RowKey) -> Result<Vec<f64>> {
        let eager = self.cfg.consistency.model.is_eager();
        let mut last_progress = Instant::now();
        loop {
            while let Ok(p) = self.inbox.try_recv() {
                self.deliver(p)?;
            }
            if let Some(read) = self.cache.get(row) {
                let shard = shard_of(row, self.cfg.shards);
                self.reads.push(ReadStalenessSample::new(
                    self.id,
                    self.cache.c_worker(),
                    read.c_param,
                    row,
                    shard,
                    read.version,
                ));
                return Ok(read.values);
            }
            let waiting_for_push = eager && self.cache.state(row) == ReadState::Stale && self.cache.is_registered(row);
            if !waiting_for_push && !self.cache.has_outstanding(row) {
                if let Some((dst, payload)) = self.cache.request(row) {
                    let Endpoint::Server(h) = dst else {
                        return Err(Error::Protocol("read request not addressed to a shard".into()));
                    };
                    self.send(h, payload)?;
                }
            }
            match self.inbox.recv_timeout(self.cfg.retry) {
                Ok(p) => {
                    self.deliver(p)?;
                    last_progress = Instant::now();
                }
                Err(RecvTimeoutError::Timeout) if last_progress.elapsed() < self.cfg.timeout => {}
                Err(RecvTimeoutError::Timeout) => return Err(Error::Timeout(row)),
                Err(RecvTimeoutError::Disconnected) => return Err(Error::Protocol("all shards hung up".into())),
            }
        }
    }

    fn run(mut self, workload: &dyn Workload) -> Result<(Vec<ReadStalenessSample>, Vec<Update>)> {
        let p = self.cfg.workers as u64;
        let m = workload.items_per_clock(self.cfg.workers)? as u64;
        for clock in 0..self.cfg.clocks {
            for (i, item) in workload.schedule(self.id, clock, self.cfg.workers)?.into_iter().enumerate() {
                let rows = workload.rows_of(item);
                let mut views = Vec::with_capacity(rows.len());
                for row in &rows {
                    views.push(self.get(*row)?);
                }
                let t = (clock * p + self.id as u64) * m + i as u64 + 1;
                for (row, delta) in workload.step(item, t, &views)?.deltas {
                    self.cache.inc(row, delta)?;
                }
            }
            let (batch, out) = self.cache.clock()?;
            self.updates.extend(batch);
            for (dst, payload) in out {
                let Endpoint::Server(h) = dst else {
                    return Err(Error::Protocol("clock message not addressed to a shard".into()));
                };
                self.send(h, payload)?;
            }
        }
        Ok((self.reads, self.updates))
    }
}

fn serve(mut shard: ServerShard, inbox: Receiver<Payload>, clients: Vec<Sender<Payload>>) -> Result<ServerShard> {
    for payload in inbox {
        for (dst, reply) in shard.handle(&payload)? {
            if let Endpoint::Client(w) = dst {
                // a worker that already finished no longer listens
                let _ = clients[w].send(reply);
            }
        }
    }
    Ok(shard)
}

/// Runs `workload` with real threads. Returns once every worker finished all
/// clocks and every shard drained its queue.
pub fn run_threaded(workload: &dyn Workload, cfg: &ThreadedConfig) -> Result<ThreadedOutput> {
    if cfg.workers == 0 {
        return Err(Error::NoWorkers);
    }
    if cfg.shards == 0 {
        return Err(Error::Config("need at least one server shard".into()));
    }
    let model = cfg.consistency.model;
    if model.is_vap() {
        return Err(Error::Config("VAP needs the simulated coordinator; threaded mode supports BSP/SSP/ESSP".into()));
    }
    let width = workload.width();
    let x0 = workload.initial_params();
    let mut shards: Vec<ServerShard> =
        (0..cfg.shards).map(|h| ServerShard::new(h, cfg.workers, model, width).with_apply_log()).collect();
    for (row, v) in &x0 {
        shards[shard_of(*row, cfg.shards)].preload(*row, v.clone())?;
    }

    let (shard_tx, shard_rx): (Vec<_>, Vec<_>) = (0..cfg.shards).map(|_| mpsc::channel::<Payload>()).unzip();
    let (client_tx, client_rx): (Vec<_>, Vec<_>) = (0..cfg.workers).map(|_| mpsc::channel::<Payload>()).unzip();

    let (worker_results, shard_results) = thread::scope(|scope| {
        let shard_handles: Vec<_> = shards
            .into_iter()
            .zip(shard_rx)
            .map(|(shard, rx)| {
                let clients = client_tx.clone();
                scope.spawn(move || serve(shard, rx, clients))
            })
            .collect();
        drop(client_tx);
        let worker_handles: Vec<_> = client_rx
            .into_iter()
            .enumerate()
            .map(|(id, inbox)| {
                let worker = Worker {
                    id,
                    cache: ClientCache::new(id, cfg.shards, width, cfg.consistency),
                    inbox,
                    shards: shard_tx.clone(),
                    cfg,
                    reads: Vec::new(),
                    updates: Vec::new(),
                };
                scope.spawn(move || worker.run(workload))
            })
            .collect();
        drop(shard_tx);
        let workers: Vec<_> = worker_handles.into_iter().map(|h| h.join()).collect();
        let shards: Vec<_> = shard_handles.into_iter().map(|h| h.join()).collect();
        (workers, shards)
    });

    let mut reads = Vec::new();
    let mut updates = Vec::new();
    for r in worker_results {
        let (rd, up) = r.map_err(|_| Error::Protocol("worker thread panicked".into()))??;
        reads.extend(rd);
        updates.extend(up);
    }
    let mut final_params = Params::new();
    let mut apply_log = Vec::new();
    for r in shard_results {
        let mut shard = r.map_err(|_| Error::Protocol("shard thread panicked".into()))??;
        apply_log.extend(shard.take_apply_log());
        for (row, v) in shard.rows() {
            final_params.insert(*row, v.values.clone());
        }
    }
    Ok(ThreadedOutput { initial_params: x0, final_params, reads, apply_log, updates })
}
