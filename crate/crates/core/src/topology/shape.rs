use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shard::ShardPlan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyKind {
    /// Flat-parallel: `m` shard aggregators, one phase.
    GradsSharding { m: u64 },
    /// Two-level tree: leaves of about sqrt(N) clients, then a root.
    LambdaFl,
    /// Three-level hierarchy with cube-root branching, all transfer via the store.
    Lifl,
}

impl TopologyKind {
    pub fn name(&self) -> &'static str {
        match self {
            TopologyKind::GradsSharding { .. } => "gradsharding",
            TopologyKind::LambdaFl => "lambdafl",
            TopologyKind::Lifl => "lifl",
        }
    }

    /// Shards per client gradient; 1 for the tree topologies.
    pub fn shard_count(&self) -> u64 {
        match self {
            TopologyKind::GradsSharding { m } => *m,
            _ => 1,
        }
    }

    pub fn phase_count(&self) -> usize {
        match self {
            TopologyKind::GradsSharding { .. } => 1,
            TopologyKind::LambdaFl => 2,
            TopologyKind::Lifl => 3,
        }
    }

    /// Parses a topology name; `m` applies to gradsharding only.
    pub fn parse(name: &str, m: u64) -> Result<Self> {
        match name {
            "gradsharding" | "grads-sharding" => {
                if m < 1 {
                    return Err(Error::InvalidArgument("gradsharding needs m >= 1".into()));
                }
                Ok(TopologyKind::GradsSharding { m })
            }
            "lambdafl" | "lambda-fl" => Ok(TopologyKind::LambdaFl),
            "lifl" => Ok(TopologyKind::Lifl),
            other => Err(Error::InvalidArgument(format!(
                "unknown topology {other:?}"
            ))),
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyKind::GradsSharding { m } => write!(f, "gradsharding(m={m})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    /// Accepts `lambdafl`, `lifl`, `gradsharding` (m = 1) or `gradsharding:M`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((name, m)) => {
                let m = m
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad shard count in {s:?}")))?;
                TopologyKind::parse(name, m)
            }
            None => TopologyKind::parse(s, 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum TreeShape {
    LambdaFl {
        k: u32,
        leaf_count: u32,
    },
    Lifl {
        b: u32,
        l1_count: u32,
        l2_count: u32,
    },
}

/// Smallest `r` with `r^p >= n`.
fn ceil_root(n: u32, p: u32) -> u32 {
    let mut r = (n as f64).powf(1.0 / p as f64).round().max(1.0) as u64;
    while r.pow(p) < n as u64 {
        r += 1;
    }
    while r > 1 && (r - 1).pow(p) >= n as u64 {
        r -= 1;
    }
    r as u32
}

impl TreeShape {
    pub fn lambda_fl(n: u32) -> Self {
        let k = ceil_root(n, 2).max(2);
        TreeShape::LambdaFl {
            k,
            leaf_count: n.div_ceil(k),
        }
    }

    pub fn lifl(n: u32) -> Self {
        let b = ceil_root(n, 3);
        let l1_count = n.div_ceil(b);
        TreeShape::Lifl {
            b,
            l1_count,
            l2_count: l1_count.div_ceil(b),
        }
    }

    pub fn for_kind(kind: TopologyKind, n: u32) -> Option<Self> {
        match kind {
            TopologyKind::GradsSharding { .. } => None,
            TopologyKind::LambdaFl => Some(Self::lambda_fl(n)),
            TopologyKind::Lifl => Some(Self::lifl(n)),
        }
    }

    /// Intermediate aggregators below the root.
    pub fn intermediate_count(&self) -> u32 {
        match *self {
            TreeShape::LambdaFl { leaf_count, .. } => leaf_count,
            TreeShape::Lifl {
                l1_count, l2_count, ..
            } => l1_count + l2_count,
        }
    }
}

/// Contiguous balanced partition of `0..n` into `groups` ranges, larger
/// groups first.
pub fn balanced_groups(n: u32, groups: u32) -> Vec<Range<u32>> {
    ShardPlan::new(n as u64, groups as u64)
        .expect("groups >= 1")
        .boundaries()
        .iter()
        .map(|r| r.start as u32..r.end as u32)
        .collect()
}

/// Per-round S3 operation counts split by issuer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PredictedOps {
    pub puts: u64,
    pub gets_agg: u64,
    pub gets_clients: u64,
}

impl PredictedOps {
    pub fn gets(&self) -> u64 {
        self.gets_agg + self.gets_clients
    }

    pub fn total(&self) -> u64 {
        self.puts + self.gets()
    }
}

/// Closed-form S3 operations for one full round trip.
pub fn predicted_s3_ops(kind: TopologyKind, n: u32) -> PredictedOps {
    let n = n as u64;
    match kind {
        TopologyKind::GradsSharding { m } => PredictedOps {
            puts: n * m + m,
            gets_agg: n * m,
            gets_clients: n * m,
        },
        tree => {
            let inner = TreeShape::for_kind(tree, n as u32)
                .expect("tree topology")
                .intermediate_count() as u64;
            PredictedOps {
                puts: n + inner + 1,
                gets_agg: n + inner,
                gets_clients: n,
            }
        }
    }
}
