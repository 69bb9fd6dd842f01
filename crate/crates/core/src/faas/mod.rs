//! Simulated serverless executor.
//!
//! Each invocation streams its inputs from the store one object at a time,
//! accumulates them, and writes one output. Members of a phase share a start
//! time on the [`VirtualClock`]; the phase lasts as long as its slowest member.

mod clock;
mod limits;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use clock::VirtualClock;
pub use limits::{
    check_feasibility, collect_then_average_peak, compute_time_model, estimate_peak_memory,
    streaming_lower_bound, FeasibilityVerdict, PlatformLimits,
};

use crate::accumulate::StreamingAccumulator;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::store::{Blob, Issuer, ObjectKey, ObjectStore};
use crate::tensor::mb_of_bytes;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FunctionSpec {
    pub allocated_memory_mb: u32,
    pub timeout_s: f64,
    /// Total bytes the invocation reads.
    pub input_bytes: u64,
}

/// What an aggregator writes when it is done.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    /// Weighted sum plus weight, for the next tree level.
    PartialSum,
    /// Final mean.
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregationTask {
    pub function: String,
    pub inputs: Vec<ObjectKey>,
    /// Parameters per input object.
    pub object_params: u64,
    pub output: ObjectKey,
    pub emit: Emit,
}

impl AggregationTask {
    pub fn object_mb(&self) -> f64 {
        mb_of_bytes(self.object_params * crate::tensor::BYTES_PER_PARAM)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvocationRecord {
    pub function: String,
    pub start_s: f64,
    pub read_time: f64,
    pub compute_time: f64,
    pub write_time: f64,
    pub cold_start_penalty: f64,
    pub total_time: f64,
    pub peak_memory_estimate_mb: f64,
    pub allocated_memory_mb: u32,
    /// `total_time` rounded up to whole milliseconds.
    pub billed_duration_s: f64,
    pub billed_gb_seconds: f64,
    /// Largest amount of gradient data the accumulator held at once.
    pub live_gradient_bytes: u64,
    pub objects_read: usize,
    /// Host wall time spent accumulating real data; absent for phantom runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured_compute_s: Option<f64>,
}

impl InvocationRecord {
    /// The record with host-dependent measurements removed.
    pub fn simulated(&self) -> InvocationRecord {
        InvocationRecord {
            measured_compute_s: None,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub index: usize,
    pub start_s: f64,
    pub wall_clock_s: f64,
    pub billed_gb_seconds: f64,
    pub invocations: Vec<InvocationRecord>,
}

impl PhaseRecord {
    /// The member that determines the phase duration.
    pub fn critical(&self) -> Option<&InvocationRecord> {
        self.invocations
            .iter()
            .max_by(|a, b| a.total_time.total_cmp(&b.total_time))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecutorConfig {
    /// MB/s of FedAvg accumulation inside one function.
    pub compute_throughput: f64,
    pub timeout_s: f64,
    pub cold_start: bool,
    pub cold_start_penalty_s: f64,
    /// Fixed memory for every function instead of auto-provisioning.
    pub memory_override_mb: Option<u32>,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            compute_throughput: 5225.0,
            timeout_s: 900.0,
            cold_start: false,
            cold_start_penalty_s: 3.0,
            memory_override_mb: None,
        }
    }
}

impl ExecutorConfig {
    pub fn validate(&self, limits: &PlatformLimits) -> Result<()> {
        if !(self.compute_throughput > 0.0 && self.compute_throughput.is_finite()) {
            return Err(Error::Config(
                "executor.compute_throughput must be positive".into(),
            ));
        }
        if !(self.timeout_s > 0.0) || self.timeout_s > limits.max_timeout_s {
            return Err(Error::Config(format!(
                "executor.timeout_s must be in (0, {}]",
                limits.max_timeout_s
            )));
        }
        if !(self.cold_start_penalty_s >= 0.0) {
            return Err(Error::Config(
                "executor.cold_start_penalty_s must be >= 0".into(),
            ));
        }
        if let Some(mb) = self.memory_override_mb {
            if (mb as f64) < limits.min_memory_mb || mb as f64 > limits.max_memory_mb {
                return Err(Error::Config(format!(
                    "executor.memory_override_mb {mb} is outside [{}, {}]",
                    limits.min_memory_mb, limits.max_memory_mb
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct Executor {
    pub limits: PlatformLimits,
    pub config: ExecutorConfig,
    pub exec: Exec,
}

impl Executor {
    pub fn new(limits: PlatformLimits, config: ExecutorConfig) -> Self {
        Self {
            limits,
            config,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// Function spec for a task: auto-provisioned from the memory model unless
    /// an override is configured.
    pub fn spec_for(&self, task: &AggregationTask) -> FunctionSpec {
        let required = estimate_peak_memory(task.object_mb(), &self.limits);
        FunctionSpec {
            allocated_memory_mb: self
                .config
                .memory_override_mb
                .unwrap_or_else(|| self.limits.provision(required)),
            timeout_s: self.config.timeout_s,
            input_bytes: task.inputs.len() as u64
                * task.object_params
                * crate::tensor::BYTES_PER_PARAM,
        }
    }

    /// Runs one aggregator starting at `start_s`.
    pub fn invoke(
        &self,
        spec: &FunctionSpec,
        task: &AggregationTask,
        store: &mut ObjectStore,
        start_s: f64,
    ) -> Result<InvocationRecord> {
        if task.inputs.is_empty() {
            return Err(Error::State(format!(
                "{}: task has no inputs",
                task.function
            )));
        }
        let peak_memory_estimate_mb = estimate_peak_memory(task.object_mb(), &self.limits);
        if peak_memory_estimate_mb > spec.allocated_memory_mb as f64 {
            return Err(Error::OutOfMemory {
                function: task.function.clone(),
                required_mb: peak_memory_estimate_mb,
                allocated_mb: spec.allocated_memory_mb,
            });
        }

        let mut acc = StreamingAccumulator::with_exec(task.object_params, self.exec);
        let mut read_time = 0.0;
        let mut bytes_accumulated = 0u64;
        let mut measured = None::<f64>;
        for key in &task.inputs {
            let (blob, t) = store.get(key, Issuer::Aggregator)?;
            read_time += t;
            bytes_accumulated += blob.byte_size();
            let began = Instant::now();
            let phantom = match blob.as_ref() {
                Blob::Gradient(g) => {
                    acc.accumulate(g, 1.0)?;
                    g.is_phantom()
                }
                Blob::Partial(p) => {
                    acc.merge(p)?;
                    p.sum.is_phantom()
                }
            };
            if !phantom {
                *measured.get_or_insert(0.0) += began.elapsed().as_secs_f64();
            }
        }
        let compute_time = compute_time_model(bytes_accumulated, self.config.compute_throughput)?;
        let output = match task.emit {
            Emit::Mean => Blob::Gradient(acc.finalize()?),
            Emit::PartialSum => Blob::Partial(acc.into_partial()?),
        };
        let write_time = store.transfer().write_seconds(output.byte_size());
        let cold_start_penalty = if self.config.cold_start {
            self.config.cold_start_penalty_s
        } else {
            0.0
        };
        let total_time = read_time + compute_time + write_time + cold_start_penalty;
        if total_time > spec.timeout_s {
            return Err(Error::Timeout {
                function: task.function.clone(),
                elapsed_s: total_time,
                timeout_s: spec.timeout_s,
            });
        }
        store.put(task.output.clone(), output, Issuer::Aggregator)?;

        let billed_duration_s = crate::econ::billed_seconds(total_time);
        Ok(InvocationRecord {
            function: task.function.clone(),
            start_s,
            read_time,
            compute_time,
            write_time,
            cold_start_penalty,
            total_time,
            peak_memory_estimate_mb,
            allocated_memory_mb: spec.allocated_memory_mb,
            billed_duration_s,
            billed_gb_seconds: spec.allocated_memory_mb as f64 / 1024.0 * billed_duration_s,
            live_gradient_bytes: acc.peak_live_bytes(),
            objects_read: task.inputs.len(),
            measured_compute_s: measured,
        })
    }

    /// Runs independent invocations from a common start time and advances the
    /// clock by the slowest one.
    pub fn run_phase(
        &self,
        index: usize,
        invocations: &[(FunctionSpec, AggregationTask)],
        store: &mut ObjectStore,
        clock: &mut VirtualClock,
    ) -> Result<PhaseRecord> {
        let start_s = clock.now();
        let mut records = Vec::with_capacity(invocations.len());
        for (spec, task) in invocations {
            let rec = self
                .invoke(spec, task, store, start_s)
                .map_err(|e| Error::Phase {
                    phase: index,
                    source: Box::new(e),
                })?;
            records.push(rec);
        }
        let wall_clock_s = records.iter().map(|r| r.total_time).fold(0.0, f64::max);
        let billed_gb_seconds = records.iter().map(|r| r.billed_gb_seconds).sum();
        clock.advance(wall_clock_s);
        Ok(PhaseRecord {
            index,
            start_s,
            wall_clock_s,
            billed_gb_seconds,
            invocations: records,
        })
    }
}
