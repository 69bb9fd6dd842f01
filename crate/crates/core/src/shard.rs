//! Contiguous gradient sharding and reassembly.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::tensor::{GradientTensor, Payload};

/// Balanced contiguous split of `total_params` into `shard_count` ranges.
/// The first `total_params % shard_count` shards carry one extra parameter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShardPlan {
    total_params: u64,
    boundaries: Vec<Range<u64>>,
}

impl ShardPlan {
    pub fn new(total_params: u64, shard_count: u64) -> Result<Self> {
        if shard_count < 1 {
            return Err(Error::InvalidArgument(
                "shard count must be at least 1".into(),
            ));
        }
        let base = total_params / shard_count;
        let extra = total_params % shard_count;
        let mut start = 0;
        let boundaries = (0..shard_count)
            .map(|j| {
                let len = base + u64::from(j < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        Ok(Self {
            total_params,
            boundaries,
        })
    }

    pub fn total_params(&self) -> u64 {
        self.total_params
    }

    pub fn shard_count(&self) -> usize {
        self.boundaries.len()
    }

    pub fn boundaries(&self) -> &[Range<u64>] {
        &self.boundaries
    }

    pub fn shard_len(&self, j: usize) -> u64 {
        let r = &self.boundaries[j];
        r.end - r.start
    }

    /// Largest shard, the one that bounds per-aggregator memory.
    pub fn max_shard_len(&self) -> u64 {
        self.boundaries.first().map_or(0, |r| r.end - r.start)
    }
}

/// Splits `g` into `m` contiguous shards following [`ShardPlan`].
pub fn shard(g: &GradientTensor, m: u64) -> Result<Vec<GradientTensor>> {
    if m < 1 {
        return Err(Error::InvalidArgument(
            "shard count must be at least 1".into(),
        ));
    }
    if m == 1 {
        return Ok(vec![g.clone()]);
    }
    let plan = ShardPlan::new(g.param_count(), m)?;
    match g.payload() {
        Payload::Phantom => Ok(plan
            .boundaries()
            .iter()
            .map(|r| GradientTensor::phantom(r.end - r.start))
            .collect()),
        Payload::Materialized(data) => {
            if m > g.param_count() {
                return Err(Error::InvalidArgument(format!(
                    "cannot split {} params into {m} shards",
                    g.param_count()
                )));
            }
            Ok(plan
                .boundaries()
                .iter()
                .map(|r| GradientTensor::from_vec(data[r.start as usize..r.end as usize].to_vec()))
                .collect())
        }
    }
}

/// Reassembles shards in order.
pub fn concat(shards: &[GradientTensor]) -> Result<GradientTensor> {
    let first = shards
        .first()
        .ok_or_else(|| Error::InvalidArgument("concat of an empty shard list".into()))?;
    if shards.len() == 1 {
        return Ok(first.clone());
    }
    let total: u64 = shards.iter().map(GradientTensor::param_count).sum();
    if shards.iter().all(GradientTensor::is_phantom) {
        return Ok(GradientTensor::phantom(total));
    }
    if shards.iter().any(GradientTensor::is_phantom) {
        return Err(Error::InvalidArgument(
            "cannot concat phantom and materialized shards".into(),
        ));
    }
    let mut out = Vec::with_capacity(total as usize);
    for s in shards {
        out.extend_from_slice(s.values()?);
    }
    Ok(GradientTensor::from_vec(out))
}
