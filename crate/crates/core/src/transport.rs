//! Deterministic virtual-time message bus.
//!
//! Every message and local timer goes through one priority queue ordered by
//! `(deliver_time, seq)`, where `seq` is a global send counter. Given the same
//! configuration and seed the pop order is identical across runs.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{ParamRow, RowKey, Update};

/// Abstract virtual-time ticks.
pub type VirtualTime = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Server(usize),
    Client(usize),
    Coordinator,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Server(s) => write!(f, "s{s}"),
            Endpoint::Client(c) => write!(f, "c{c}"),
            Endpoint::Coordinator => f.write_str("vap"),
        }
    }
}

/// Which of a client's own increment batches a row snapshot already reflects:
/// every clock below `below`, plus the clocks listed in `extra`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OwnApplied {
    pub below: u64,
    pub extra: Vec<u64>,
}

impl OwnApplied {
    pub fn contains(&self, clock: u64) -> bool {
        clock < self.below || self.extra.contains(&clock)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    IncBatch { worker: usize, clock: u64, updates: Vec<Update> },
    ClockTick { worker: usize, clock: u64 },
    ReadRequest { worker: usize, clock: u64, row: RowKey },
    ReadReply { row: RowKey, data: ParamRow, own: OwnApplied },
    PushRow { row: RowKey, data: ParamRow, own: OwnApplied },
    VapAdmitRequest { worker: usize, t: u64 },
    VapAdmitReply { worker: usize, admit: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageKind {
    IncBatch,
    ClockTick,
    ReadRequest,
    ReadReply,
    PushRow,
    VapAdmitRequest,
    VapAdmitReply,
}

impl MessageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MessageKind::IncBatch => "IncBatch",
            MessageKind::ClockTick => "ClockTick",
            MessageKind::ReadRequest => "ReadRequest",
            MessageKind::ReadReply => "ReadReply",
            MessageKind::PushRow => "PushRow",
            MessageKind::VapAdmitRequest => "VapAdmitRequest",
            MessageKind::VapAdmitReply => "VapAdmitReply",
        }
    }
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::IncBatch { .. } => MessageKind::IncBatch,
            Payload::ClockTick { .. } => MessageKind::ClockTick,
            Payload::ReadRequest { .. } => MessageKind::ReadRequest,
            Payload::ReadReply { .. } => MessageKind::ReadReply,
            Payload::PushRow { .. } => MessageKind::PushRow,
            Payload::VapAdmitRequest { .. } => MessageKind::VapAdmitRequest,
            Payload::VapAdmitReply { .. } => MessageKind::VapAdmitReply,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub send_time: VirtualTime,
    pub deliver_time: VirtualTime,
    pub seq: u64,
    pub payload: Payload,
}

impl Message {
    /// An unscheduled message; `deliver_time` and `seq` are assigned by [`Network::send`].
    pub fn new(src: Endpoint, dst: Endpoint, now: VirtualTime, payload: Payload) -> Self {
        Message { src, dst, send_time: now, deliver_time: now, seq: 0, payload }
    }

    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DelayKind {
    Zero,
    UniformInt { lo: u64, hi: u64 },
    PerLinkFixed { links: BTreeMap<(Endpoint, Endpoint), u64>, default: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayModel {
    pub kind: DelayKind,
    pub seed: u64,
}

impl DelayModel {
    pub fn zero() -> Self {
        DelayModel { kind: DelayKind::Zero, seed: 0 }
    }

    pub fn uniform(lo: u64, hi: u64, seed: u64) -> Result<Self> {
        if lo > hi {
            return Err(Error::Config(format!("uniform delay needs lo <= hi (got {lo} > {hi})")));
        }
        Ok(DelayModel { kind: DelayKind::UniformInt { lo, hi }, seed })
    }

    pub fn per_link(links: BTreeMap<(Endpoint, Endpoint), u64>, default: u64) -> Self {
        DelayModel { kind: DelayKind::PerLinkFixed { links, default }, seed: 0 }
    }

    /// Whether every link delivers in send order.
    pub fn is_fifo(&self) -> bool {
        !matches!(self.kind, DelayKind::UniformInt { lo, hi } if lo != hi)
    }

    pub fn max_delay(&self) -> u64 {
        match &self.kind {
            DelayKind::Zero => 0,
            DelayKind::UniformInt { hi, .. } => *hi,
            DelayKind::PerLinkFixed { links, default } => links.values().copied().max().unwrap_or(0).max(*default),
        }
    }
}

/// Seeded delay sampler.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    model: DelayModel,
    rng: ChaCha8Rng,
}

impl DelaySampler {
    pub fn new(model: DelayModel) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(model.seed);
        DelaySampler { model, rng }
    }

    pub fn sample(&mut self, src: Endpoint, dst: Endpoint) -> u64 {
        match &self.model.kind {
            DelayKind::Zero => 0,
            DelayKind::UniformInt { lo, hi } => self.rng.random_range(*lo..=*hi),
            DelayKind::PerLinkFixed { links, default } => links.get(&(src, dst)).copied().unwrap_or(*default),
        }
    }
}

/// Something popped from the queue: a network message or a local timer.
#[derive(Debug, Clone, PartialEq)]
pub enum Event<T> {
    Message(Message),
    Local(T),
}

#[derive(Debug)]
struct Entry<T> {
    time: VirtualTime,
    seq: u64,
    event: Event<T>,
}

impl<T> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl<T> Eq for Entry<T> {}
impl<T> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Entry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// One delivered message, as written to the event-trace dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub deliver_time: VirtualTime,
    pub kind: MessageKind,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub seq: u64,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{},{}", self.deliver_time, self.kind.as_str(), self.src, self.dst, self.seq)
    }
}

/// Renders records as newline-delimited `deliver_time,kind,src,dst,seq`.
pub fn format_event_trace(records: &[EventRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 24);
    for r in records {
        let _ = writeln!(out, "{r}");
    }
    out
}

/// Global event queue plus virtual clock.
#[derive(Debug)]
pub struct Network<T> {
    now: VirtualTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Entry<T>>>,
    delays: DelaySampler,
    trace: Option<Vec<EventRecord>>,
    sent: u64,
    delivered: u64,
}

impl<T> Network<T> {
    pub fn new(delays: DelayModel) -> Self {
        Network {
            now: 0,
            next_seq: 0,
            heap: BinaryHeap::new(),
            delays: DelaySampler::new(delays),
            trace: None,
            sent: 0,
            delivered: 0,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn now(&self) -> VirtualTime {
        self.now
    }

    fn bump_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    /// Schedules `msg` for delivery at `now + delay`. `msg.send_time` must equal `now`.
    pub fn send(&mut self, mut msg: Message) -> Result<VirtualTime> {
        if msg.send_time != self.now {
            return Err(Error::Protocol(format!(
                "message stamped send_time {} but virtual time is {}",
                msg.send_time, self.now
            )));
        }
        let delay = self.delays.sample(msg.src, msg.dst);
        msg.deliver_time = self.now + delay;
        msg.seq = self.bump_seq();
        self.sent += 1;
        let t = msg.deliver_time;
        self.heap.push(Reverse(Entry { time: t, seq: msg.seq, event: Event::Message(msg) }));
        Ok(t)
    }

    /// Convenience wrapper building the message stamped with the current time.
    pub fn post(&mut self, src: Endpoint, dst: Endpoint, payload: Payload) -> Result<VirtualTime> {
        let m = Message::new(src, dst, self.now, payload);
        self.send(m)
    }

    /// Schedules a local (non-network) event.
    pub fn schedule_local(&mut self, at: VirtualTime, event: T) {
        let at = at.max(self.now);
        let seq = self.bump_seq();
        self.heap.push(Reverse(Entry { time: at, seq, event: Event::Local(event) }));
    }

    /// Logs an exchange that is resolved synchronously at the current instant
    /// (the omniscient VAP coordinator). It consumes a sequence number so it
    /// is ordered in the trace, but never enters the queue.
    pub fn record_instant(&mut self, src: Endpoint, dst: Endpoint, kind: MessageKind) {
        let seq = self.bump_seq();
        if let Some(t) = self.trace.as_mut() {
            t.push(EventRecord { deliver_time: self.now, kind, src, dst, seq });
        }
    }

    /// Pops the globally minimal `(deliver_time, seq)` event, advancing the clock.
    /// `None` is end-of-simulation.
    pub fn next_event(&mut self) -> Option<(VirtualTime, Event<T>)> {
        let Reverse(e) = self.heap.pop()?;
        debug_assert!(e.time >= self.now);
        self.now = e.time;
        if let Event::Message(m) = &e.event {
            self.delivered += 1;
            if let Some(t) = self.trace.as_mut() {
                t.push(EventRecord {
                    deliver_time: m.deliver_time,
                    kind: m.kind(),
                    src: m.src,
                    dst: m.dst,
                    seq: m.seq,
                });
            }
        }
        Some((e.time, e.event))
    }

    pub fn is_idle(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn take_trace(&mut self) -> Option<Vec<EventRecord>> {
        self.trace.take()
    }
}
