//! Deterministic data-parallel SGD simulator.
//!
//! `n` simulated workers train copies of one model on disjoint mini-batches
//! and periodically average their parameters. The averaging schedule is
//! pluggable: every iteration, a constant period, a piecewise-constant
//! period, an adaptive period driven by the measured inter-worker parameter
//! variance, or quantized gradient exchange. Every run records per-iteration
//! variance, communication volume and a ring-allreduce time estimate.
//!
//! Runs are bit-reproducible for a given plan and seed regardless of how many
//! threads compute the worker gradients.

pub mod cluster;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod numkit;
pub mod optim;
pub mod sync;

pub use cluster::{run, run_serial_reference, RunPlan, RunResult, WorkerState};
pub use data::{gen_synthetic, load_csv, CsvSchema, Dataset, SamplerState, SyntheticKind, TaskKind};
pub use error::{Error, Result};
pub use metrics::{allreduce_time, CostModel, MetricsRecord};
pub use model::{Batch, ModelKind, ModelSpec};
pub use numkit::{ParamVector, RngStream};
pub use optim::{LrSchedule, MomentumState, WarmupMode};
pub use sync::{AdaptiveParams, Segment, SyncEvent, SyncStrategy, Synchronizer};
