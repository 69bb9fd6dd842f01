use serde::Serialize;

use crate::error::{Error, Result};
use crate::faas::{
    check_feasibility, AggregationTask, Emit, Executor, FeasibilityVerdict, FunctionSpec,
};
use crate::shard::ShardPlan;
use crate::store::{KeyPattern, ObjectKey, Role, Trigger};
use crate::tensor::{mb_of_bytes, BYTES_PER_PARAM};

use super::shape::{balanced_groups, TopologyKind, TreeShape};

#[derive(Clone, Debug, Serialize)]
pub struct PlannedInvocation {
    pub spec: FunctionSpec,
    pub task: AggregationTask,
    #[serde(skip)]
    pub trigger: Trigger,
}

/// A topology instantiated for one round: who uploads what, which functions
/// run in which phase, and what clients read back. Immutable once built.
#[derive(Clone, Debug, Serialize)]
pub struct RoundPlan {
    pub kind: TopologyKind,
    pub n: u32,
    pub round: u32,
    pub gradient_params: u64,
    pub tree: Option<TreeShape>,
    #[serde(skip)]
    pub shards: ShardPlan,
    pub feasibility: FeasibilityVerdict,
    /// Keys each client writes, in upload order.
    pub uploads: Vec<Vec<ObjectKey>>,
    pub phases: Vec<Vec<PlannedInvocation>>,
    /// Keys each client reads after aggregation.
    pub readback: Vec<ObjectKey>,
}

impl RoundPlan {
    pub fn gradient_mb(&self) -> f64 {
        mb_of_bytes(self.gradient_params * BYTES_PER_PARAM)
    }

    pub fn invocation_count(&self) -> usize {
        self.phases.iter().map(Vec::len).sum()
    }

    pub fn invocations(&self) -> impl Iterator<Item = &PlannedInvocation> {
        self.phases.iter().flatten()
    }
}

struct Builder<'a> {
    executor: &'a Executor,
    round: u32,
    phases: Vec<Vec<PlannedInvocation>>,
    next_action: usize,
}

impl Builder<'_> {
    fn phase(&mut self) {
        self.phases.push(Vec::new());
    }

    fn add(
        &mut self,
        function: String,
        pattern: KeyPattern,
        inputs: Vec<ObjectKey>,
        params: u64,
        output: ObjectKey,
        emit: Emit,
    ) {
        let task = AggregationTask {
            function,
            object_params: params,
            output,
            emit,
            inputs,
        };
        let trigger = Trigger {
            pattern,
            required_count: task.inputs.len(),
            action: self.next_action,
        };
        self.next_action += 1;
        let spec = self.executor.spec_for(&task);
        self.phases
            .last_mut()
            .expect("phase opened")
            .push(PlannedInvocation {
                spec,
                task,
                trigger,
            });
    }

    fn pattern(
        &self,
        role: Role,
        shard_index: Option<u32>,
        ids: Option<std::ops::Range<u32>>,
    ) -> KeyPattern {
        KeyPattern {
            round: self.round,
            role,
            shard_index,
            id_range: ids,
        }
    }
}

/// Builds the round plan for `kind` over `n` clients with gradients of
/// `gradient_params` parameters. Fails with [`Error::Infeasible`] when an
/// aggregator cannot fit the platform memory ceiling.
pub fn plan(
    kind: TopologyKind,
    n: u32,
    gradient_params: u64,
    executor: &Executor,
) -> Result<RoundPlan> {
    plan_round(kind, n, gradient_params, executor, 0)
}

pub fn plan_round(
    kind: TopologyKind,
    n: u32,
    gradient_params: u64,
    executor: &Executor,
    round: u32,
) -> Result<RoundPlan> {
    if n < 1 {
        return Err(Error::InvalidArgument(
            "a round needs at least one client".into(),
        ));
    }
    let m = kind.shard_count();
    if m < 1 || m > gradient_params {
        return Err(Error::InvalidArgument(format!(
            "shard count {m} must be in [1, {gradient_params}]"
        )));
    }
    let gradient_mb = mb_of_bytes(gradient_params * BYTES_PER_PARAM);
    let feasibility = check_feasibility(gradient_mb, m, &executor.limits)?;
    if let FeasibilityVerdict::Infeasible { required_mb } = feasibility {
        return Err(Error::Infeasible {
            required_mb,
            limit_mb: executor.limits.max_memory_mb,
        });
    }

    let shards = ShardPlan::new(gradient_params, m)?;
    let tree = TreeShape::for_kind(kind, n);
    let mut b = Builder {
        executor,
        round,
        phases: Vec::new(),
        next_action: 0,
    };
    let uploads: Vec<Vec<ObjectKey>>;
    let readback: Vec<ObjectKey>;

    match (kind, tree) {
        (TopologyKind::GradsSharding { m }, _) => {
            uploads = (0..n)
                .map(|c| {
                    (0..m as u32)
                        .map(|j| ObjectKey::client_shard(round, c, j))
                        .collect()
                })
                .collect();
            b.phase();
            for j in 0..m as u32 {
                let inputs = (0..n)
                    .map(|c| ObjectKey::client_shard(round, c, j))
                    .collect();
                let pattern = b.pattern(Role::ClientShard, Some(j), None);
                b.add(
                    format!("shard-agg-{j}"),
                    pattern,
                    inputs,
                    shards.shard_len(j as usize),
                    ObjectKey::shard_result(round, j),
                    Emit::Mean,
                );
            }
            readback = (0..m as u32)
                .map(|j| ObjectKey::shard_result(round, j))
                .collect();
        }
        (TopologyKind::LambdaFl, Some(TreeShape::LambdaFl { leaf_count, .. })) => {
            uploads = (0..n)
                .map(|c| vec![ObjectKey::client_gradient(round, c)])
                .collect();
            b.phase();
            let mut leaves = Vec::new();
            for (i, group) in balanced_groups(n, leaf_count).into_iter().enumerate() {
                let out = ObjectKey::partial(round, Role::LeafPartial, i as u32)?;
                let inputs = group
                    .clone()
                    .map(|c| ObjectKey::client_gradient(round, c))
                    .collect();
                let pattern = b.pattern(Role::ClientGradient, None, Some(group));
                b.add(
                    format!("leaf-{i}"),
                    pattern,
                    inputs,
                    gradient_params,
                    out.clone(),
                    Emit::PartialSum,
                );
                leaves.push(out);
            }
            b.phase();
            let pattern = b.pattern(Role::LeafPartial, None, None);
            b.add(
                "root".into(),
                pattern,
                leaves,
                gradient_params,
                ObjectKey::root_result(round),
                Emit::Mean,
            );
            readback = vec![ObjectKey::root_result(round)];
        }
        (
            TopologyKind::Lifl,
            Some(TreeShape::Lifl {
                l1_count, l2_count, ..
            }),
        ) => {
            uploads = (0..n)
                .map(|c| vec![ObjectKey::client_gradient(round, c)])
                .collect();
            b.phase();
            for (i, group) in balanced_groups(n, l1_count).into_iter().enumerate() {
                let out = ObjectKey::partial(round, Role::Level1Partial, i as u32)?;
                let inputs = group
                    .clone()
                    .map(|c| ObjectKey::client_gradient(round, c))
                    .collect();
                let pattern = b.pattern(Role::ClientGradient, None, Some(group));
                b.add(
                    format!("l1-{i}"),
                    pattern,
                    inputs,
                    gradient_params,
                    out,
                    Emit::PartialSum,
                );
            }
            b.phase();
            let mut l2_outputs = Vec::new();
            for (i, group) in balanced_groups(l1_count, l2_count).into_iter().enumerate() {
                let out = ObjectKey::partial(round, Role::Level2Partial, i as u32)?;
                let inputs = group
                    .clone()
                    .map(|l| ObjectKey::partial(round, Role::Level1Partial, l))
                    .collect::<Result<_>>()?;
                let pattern = b.pattern(Role::Level1Partial, None, Some(group));
                b.add(
                    format!("l2-{i}"),
                    pattern,
                    inputs,
                    gradient_params,
                    out.clone(),
                    Emit::PartialSum,
                );
                l2_outputs.push(out);
            }
            b.phase();
            let pattern = b.pattern(Role::Level2Partial, None, None);
            b.add(
                "root".into(),
                pattern,
                l2_outputs,
                gradient_params,
                ObjectKey::root_result(round),
                Emit::Mean,
            );
            readback = vec![ObjectKey::root_result(round)];
        }
        _ => unreachable!("tree shape always matches its topology"),
    }

    Ok(RoundPlan {
        kind,
        n,
        round,
        gradient_params,
        tree,
        shards,
        feasibility,
        uploads,
        phases: b.phases,
        readback,
    })
}
