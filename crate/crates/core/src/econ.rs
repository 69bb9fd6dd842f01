//! Dollar costs per round and parameter-server idle ratios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faas::PlatformLimits;
use crate::topology::RoundMetrics;

/// Unit prices. Every cost computed here flows from one of these fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriceSheet {
    /// $ per GB-second of allocated function memory.
    pub lambda_gb_second: f64,
    /// $ per PUT request.
    pub s3_put: f64,
    /// $ per GET request.
    pub s3_get: f64,
}

impl Default for PriceSheet {
    fn default() -> Self {
        Self {
            lambda_gb_second: 0.000_016_666_7,
            s3_put: 0.005 / 1000.0,
            s3_get: 0.0004 / 1000.0,
        }
    }
}

impl PriceSheet {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_gb_second", self.lambda_gb_second),
            ("s3_put", self.s3_put),
            ("s3_get", self.s3_get),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "prices.{name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Billed duration: `seconds` rounded up to the next whole millisecond.
pub fn billed_seconds(seconds: f64) -> f64 {
    // tolerate representation noise such as 181.9 * 1000 = 181900.00000000003
    ((seconds * 1000.0) - 1e-6).ceil().max(0.0) / 1000.0
}

/// Billable consumption of one round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Usage {
    pub gb_seconds: f64,
    pub puts: u64,
    pub gets: u64,
}

impl Usage {
    /// From `(allocated_mb, duration_s)` per invocation plus request counts.
    pub fn from_invocations(invocations: &[(f64, f64)], puts: u64, gets: u64) -> Self {
        Self {
            gb_seconds: invocations
                .iter()
                .map(|&(mb, s)| mb / 1024.0 * billed_seconds(s))
                .sum(),
            puts,
            gets,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub lambda_cost: f64,
    pub s3_put_cost: f64,
    pub s3_get_cost: f64,
    pub s3_cost: f64,
    pub total: f64,
    pub per_1k_rounds: f64,
}

pub fn cost_of_usage(usage: &Usage, prices: &PriceSheet) -> CostReport {
    let lambda_cost = usage.gb_seconds * prices.lambda_gb_second;
    let s3_put_cost = usage.puts as f64 * prices.s3_put;
    let s3_get_cost = usage.gets as f64 * prices.s3_get;
    let s3_cost = s3_put_cost + s3_get_cost;
    let total = lambda_cost + s3_cost;
    CostReport {
        lambda_cost,
        s3_put_cost,
        s3_get_cost,
        s3_cost,
        total,
        per_1k_rounds: 1000.0 * total,
    }
}

/// Lambda GB-s of every invocation plus all round-trip S3 requests.
pub fn cost_of_round(metrics: &RoundMetrics, prices: &PriceSheet) -> CostReport {
    let ops = metrics.stats.total();
    cost_of_usage(
        &Usage {
            gb_seconds: metrics.billed_gb_seconds,
            puts: ops.puts,
            gets: ops.gets,
        },
        prices,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdleReport {
    pub t_train_ms: f64,
    pub t_agg_ms: f64,
    pub idle_ratio: f64,
    /// Set when aggregation time is zero and the ratio sits at its 100% limit.
    pub degenerate: bool,
}

/// Fraction of a round the aggregation server waits on training.
pub fn idle_ratio(t_train_ms: f64, t_agg_ms: f64) -> Result<IdleReport> {
    if !(t_train_ms >= 0.0 && t_agg_ms >= 0.0) || !(t_train_ms + t_agg_ms).is_finite() {
        return Err(Error::InvalidArgument(format!(
            "times must be finite and non-negative, got {t_train_ms} / {t_agg_ms}"
        )));
    }
    if t_train_ms == 0.0 && t_agg_ms == 0.0 {
        return Err(Error::InvalidArgument(
            "training and aggregation times are both zero".into(),
        ));
    }
    Ok(IdleReport {
        t_train_ms,
        t_agg_ms,
        idle_ratio: t_train_ms / (t_train_ms + t_agg_ms),
        degenerate: t_agg_ms == 0.0,
    })
}

/// Largest full gradient (MB) a single function can stream.
pub fn feasibility_threshold(limits: &PlatformLimits) -> Result<f64> {
    if !(limits.streaming_multiplier > 0.0) {
        return Err(Error::InvalidArgument(
            "streaming multiplier must be positive".into(),
        ));
    }
    Ok(limits.max_input_mb())
}
