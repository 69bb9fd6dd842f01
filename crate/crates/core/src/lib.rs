//! Deterministic simulation of serverless federated-learning gradient
//! aggregation.
//!
//! Three topologies are modeled over a simulated object store and function
//! executor:
//!
//! * gradient sharding: every client splits its gradient into `M` contiguous
//!   shards and `M` independent functions each average one shard index;
//! * a two-level tree with about `sqrt(N)` clients per leaf and one root;
//! * a three-level hierarchy with cube-root branching.
//!
//! The crate reports per-round latency (read/compute/write), S3 request
//! counts, function memory, feasibility against the platform memory ceiling,
//! and dollar cost. Gradients can carry real `f32` data, in which case every
//! topology is checked against a flat FedAvg oracle, or be size-only
//! ("phantom") so multi-gigabyte models simulate without allocating.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accumulate;
pub mod config;
pub mod econ;
pub mod error;
pub mod exec;
pub mod faas;
pub mod report;
pub mod shard;
pub mod store;
pub mod tensor;
pub mod topology;
pub mod verify;

pub use accumulate::{fedavg_flat, PartialSum, StreamingAccumulator};
pub use error::{Error, Result};
pub use exec::Exec;
pub use shard::{concat, shard, ShardPlan};
pub use tensor::GradientTensor;
pub use topology::{execute_round, plan, predicted_s3_ops, RoundMetrics, TopologyKind};
