//! Parameter-server consistency models on a deterministic simulated network.
//!
//! Workers talk to server shards through a GET/INC/CLOCK client. Reads are
//! gated by one of four consistency models (BSP, SSP, ESSP, VAP) and every
//! run records enough of its history to audit the model's guarantees offline.

pub mod client;
pub mod coalesce;
pub mod error;
pub mod metrics;
pub mod schedule;
pub mod seeds;
pub mod server;
pub mod sim;
pub mod threaded;
pub mod transport;
pub mod types;
pub mod workloads;

pub use client::{ClientCache, Read, ReadState};
pub use coalesce::{coalesce, coalesce_row};
pub use error::{Error, Result};
pub use schedule::{clock_major_index, clock_major_inverse, step_size, vap_threshold, StepSchedule};
pub use server::{shard_of, Admission, ServerShard, VapCoordinator, VapRecord, ViewProbe};
pub use sim::{run, RunConfig, RunOutput};
pub use threaded::{run_threaded, ThreadedConfig, ThreadedOutput};
pub use transport::{DelayKind, DelayModel, Endpoint, Message, MessageKind, Network, OwnApplied, Payload, VirtualTime};
pub use types::{ClockVector, ConsistencyConfig, ConsistencyModel, ParamRow, RowKey, Update};
