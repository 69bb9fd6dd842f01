//! The three aggregation topologies: building round plans, driving them
//! through the store and executor, and sweeping parameter grids.

mod plan;
mod shape;

use std::collections::HashSet;

use serde::Serialize;

pub use plan::{plan, plan_round, PlannedInvocation, RoundPlan};
pub use shape::{balanced_groups, predicted_s3_ops, PredictedOps, TopologyKind, TreeShape};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::faas::{Executor, PhaseRecord, VirtualClock};
use crate::shard::{concat, shard};
use crate::store::{Blob, Issuer, IssuerStats, ObjectStore, TransferModel};
use crate::tensor::{GradientTensor, BYTES_PER_MB};

/// Time split along the critical path: per phase, the slowest member's
/// read/compute/write components, summed over phases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Breakdown {
    pub s3_read_s: f64,
    pub compute_s: f64,
    pub s3_write_s: f64,
    pub cold_start_s: f64,
}

impl Breakdown {
    /// Share of read time in read plus compute. Write time is left out of
    /// aggregation time here.
    pub fn read_share(&self) -> f64 {
        self.s3_read_s / (self.s3_read_s + self.compute_s)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResultSummary {
    pub param_count: u64,
    pub size_mb: f64,
    pub phantom: bool,
    /// Sum of elements, for quick comparison between runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checksum: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundMetrics {
    pub topology: TopologyKind,
    pub n: u32,
    pub m: u64,
    pub gradient_mb: f64,
    pub shard_mb: f64,
    pub tree: Option<TreeShape>,
    /// First aggregator start to last aggregator write.
    pub wall_clock_s: f64,
    pub breakdown: Breakdown,
    pub phases: Vec<PhaseRecord>,
    pub invocation_count: usize,
    pub stats: IssuerStats,
    pub predicted: PredictedOps,
    pub billed_gb_seconds: f64,
    pub peak_memory_estimate_mb: f64,
    pub max_allocated_mb: u32,
    pub memory_utilization: f64,
    /// Slowest client's sequential upload time; not part of `wall_clock_s`.
    pub client_upload_s: f64,
    pub result_summary: ResultSummary,
    #[serde(skip)]
    pub result: GradientTensor,
}

/// Utilization at or above which a feasible configuration is flagged.
pub const HIGH_UTILIZATION: f64 = 0.9;

impl RoundMetrics {
    pub fn high_utilization(&self) -> bool {
        self.memory_utilization >= HIGH_UTILIZATION
    }

    pub fn ops_match_prediction(&self) -> bool {
        let s = &self.stats;
        s.client_upload.puts + s.aggregator.puts == self.predicted.puts
            && s.aggregator.gets == self.predicted.gets_agg
            && s.client_readback.gets == self.predicted.gets_clients
            && s.client_upload.gets == 0
            && s.client_readback.puts == 0
    }
}

/// Runs one full round trip: client uploads, triggered aggregation phases,
/// client read-back.
pub fn execute_round(
    plan: &RoundPlan,
    store: &mut ObjectStore,
    executor: &Executor,
    clients: &[GradientTensor],
) -> Result<RoundMetrics> {
    if clients.len() != plan.n as usize {
        return Err(Error::InvalidArgument(format!(
            "plan expects {} clients, got {}",
            plan.n,
            clients.len()
        )));
    }
    if let Some(c) = clients
        .iter()
        .find(|c| c.param_count() != plan.gradient_params)
    {
        return Err(Error::InvalidArgument(format!(
            "client gradient has {} params, plan expects {}",
            c.param_count(),
            plan.gradient_params
        )));
    }
    store.reset_stats();
    for inv in plan.invocations() {
        store.register_trigger(inv.trigger.clone())?;
    }

    let m = plan.kind.shard_count();
    let mut client_upload_s = 0.0f64;
    for (client, keys) in clients.iter().zip(&plan.uploads) {
        let pieces = shard(client, m)?;
        let mut t = 0.0;
        for (key, piece) in keys.iter().zip(pieces) {
            t += store.put(key.clone(), Blob::Gradient(piece), Issuer::ClientUpload)?;
        }
        client_upload_s = client_upload_s.max(t);
    }

    let mut clock = VirtualClock::new();
    let mut ready = HashSet::new();
    let mut phases = Vec::with_capacity(plan.phases.len());
    for (index, members) in plan.phases.iter().enumerate() {
        ready.extend(store.drain_fired());
        if let Some(inv) = members.iter().find(|i| !ready.contains(&i.trigger.action)) {
            return Err(Error::Phase {
                phase: index,
                source: Box::new(Error::State(format!(
                    "{} invoked before its inputs were complete",
                    inv.task.function
                ))),
            });
        }
        let work: Vec<_> = members
            .iter()
            .map(|i| (i.spec.clone(), i.task.clone()))
            .collect();
        phases.push(executor.run_phase(index, &work, store, &mut clock)?);
    }

    let mut result = None;
    for client in 0..plan.n {
        let mut parts = Vec::with_capacity(plan.readback.len());
        for key in &plan.readback {
            let (blob, _) = store.get(key, Issuer::ClientReadback)?;
            if client == 0 {
                match blob.as_ref() {
                    Blob::Gradient(g) => parts.push(g.clone()),
                    Blob::Partial(_) => {
                        return Err(Error::Invariant(format!(
                            "{key} holds an unnormalized partial"
                        )))
                    }
                }
            }
        }
        if client == 0 {
            result = Some(concat(&parts)?);
        }
    }
    let result = result.expect("at least one client");

    let metrics = summarize(
        plan,
        phases,
        store.issuer_stats(),
        client_upload_s,
        clock.now(),
        executor.limits.max_memory_mb,
        result,
    );
    if !metrics.ops_match_prediction() {
        return Err(Error::Invariant(format!(
            "{} n={}: executed ops {:?} differ from prediction {:?}",
            plan.kind, plan.n, metrics.stats, metrics.predicted
        )));
    }
    Ok(metrics)
}

fn summarize(
    plan: &RoundPlan,
    phases: Vec<PhaseRecord>,
    stats: IssuerStats,
    client_upload_s: f64,
    wall_clock_s: f64,
    max_memory_mb: f64,
    result: GradientTensor,
) -> RoundMetrics {
    let mut breakdown = Breakdown::default();
    for p in &phases {
        if let Some(c) = p.critical() {
            breakdown.s3_read_s += c.read_time;
            breakdown.compute_s += c.compute_time;
            breakdown.s3_write_s += c.write_time;
            breakdown.cold_start_s += c.cold_start_penalty;
        }
    }
    let records = phases.iter().flat_map(|p| &p.invocations);
    let peak = records
        .clone()
        .map(|r| r.peak_memory_estimate_mb)
        .fold(0.0, f64::max);
    let max_alloc = records
        .clone()
        .map(|r| r.allocated_memory_mb)
        .max()
        .unwrap_or(0);
    let checksum = result
        .values()
        .ok()
        .map(|v| v.iter().map(|&x| x as f64).sum());
    let m = plan.kind.shard_count();
    RoundMetrics {
        topology: plan.kind,
        n: plan.n,
        m,
        gradient_mb: plan.gradient_mb(),
        shard_mb: plan.shards.max_shard_len() as f64 * 4.0 / BYTES_PER_MB,
        tree: plan.tree,
        wall_clock_s,
        breakdown,
        invocation_count: records.clone().count(),
        billed_gb_seconds: phases.iter().map(|p| p.billed_gb_seconds).sum(),
        phases,
        stats,
        predicted: predicted_s3_ops(plan.kind, plan.n),
        peak_memory_estimate_mb: peak,
        max_allocated_mb: max_alloc,
        memory_utilization: plan.feasibility.required_mb() / max_memory_mb,
        client_upload_s,
        result_summary: ResultSummary {
            param_count: result.param_count(),
            size_mb: result.size_mb(),
            phantom: result.is_phantom(),
            checksum,
        },
        result,
    }
}

/// How client gradients are produced for a simulated round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClientSource {
    /// Gradients at or below this size carry real data; larger ones are phantom.
    pub materialize_max_mb: f64,
    pub seed: u64,
}

impl Default for ClientSource {
    fn default() -> Self {
        Self {
            materialize_max_mb: 16.0,
            seed: 0,
        }
    }
}

impl ClientSource {
    pub fn clients(&self, n: u32, params: u64, exec: Exec) -> Vec<GradientTensor> {
        let materialize = params as f64 * 4.0 / BYTES_PER_MB <= self.materialize_max_mb;
        let ids: Vec<u64> = (0..n as u64).collect();
        exec.map(&ids, |&i| {
            if materialize {
                GradientTensor::random(params, self.seed.wrapping_add(i))
            } else {
                GradientTensor::phantom(params)
            }
        })
    }
}

/// Plans and executes one round on a fresh store and clock.
pub fn simulate_round(
    kind: TopologyKind,
    clients: &[GradientTensor],
    transfer: TransferModel,
    executor: &Executor,
) -> Result<RoundMetrics> {
    let params = clients
        .first()
        .ok_or_else(|| Error::InvalidArgument("a round needs at least one client".into()))?
        .param_count();
    let plan = plan(kind, clients.len() as u32, params, executor)?;
    let mut store = ObjectStore::new(transfer);
    execute_round(&plan, &mut store, executor, clients)
}

/// One sweep grid point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub kind: TopologyKind,
    pub n: u32,
    pub model: String,
    pub gradient_mb: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SweepOutcome {
    Ran(Box<RoundMetrics>),
    Infeasible { required_mb: f64, limit_mb: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepPoint {
    pub point: GridPoint,
    pub outcome: SweepOutcome,
    /// First grid point's wall clock over this point's, when both ran.
    pub speedup_vs_first: Option<f64>,
}

impl SweepPoint {
    pub fn metrics(&self) -> Option<&RoundMetrics> {
        match &self.outcome {
            SweepOutcome::Ran(m) => Some(m),
            SweepOutcome::Infeasible { .. } => None,
        }
    }
}

/// Runs every grid point on its own store and clock. Infeasible points are
/// recorded, not fatal; any other failure aborts the sweep.
pub fn sweep(
    points: &[GridPoint],
    transfer: TransferModel,
    executor: &Executor,
    source: ClientSource,
    exec: Exec,
) -> Result<Vec<SweepPoint>> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    let outcomes = exec.map(points, |p| -> Result<SweepOutcome> {
        let params = crate::tensor::params_for_mb(p.gradient_mb);
        match plan(p.kind, p.n, params, executor) {
            Err(Error::Infeasible {
                required_mb,
                limit_mb,
            }) => {
                return Ok(SweepOutcome::Infeasible {
                    required_mb,
                    limit_mb,
                })
            }
            Err(e) => return Err(e),
            Ok(_) => {}
        }
        let clients = source.clients(p.n, params, exec);
        match simulate_round(p.kind, &clients, transfer, executor) {
            Ok(m) => Ok(SweepOutcome::Ran(Box::new(m))),
            Err(e) => match e.root() {
                Error::OutOfMemory { required_mb, .. } => Ok(SweepOutcome::Infeasible {
                    required_mb: *required_mb,
                    limit_mb: executor.limits.max_memory_mb,
                }),
                _ => Err(e),
            },
        }
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let first = match &outcomes[0] {
        SweepOutcome::Ran(m) => Some(m.wall_clock_s),
        SweepOutcome::Infeasible { .. } => None,
    };
    Ok(points
        .iter()
        .cloned()
        .zip(outcomes)
        .map(|(point, outcome)| {
            let speedup_vs_first = match (&outcome, first) {
                (SweepOutcome::Ran(m), Some(f)) => Some(f / m.wall_clock_s),
                _ => None,
            };
            SweepPoint {
                point,
                outcome,
                speedup_vs_first,
            }
        })
        .collect())
}
