use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{BYTES_PER_MB, BYTES_PER_PARAM};

/// Serverless platform ceilings and the empirical streaming memory model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlatformLimits {
    pub max_memory_mb: f64,
    pub min_memory_mb: f64,
    pub max_timeout_s: f64,
    /// Runtime plus SDK layer resident before any gradient is read.
    pub runtime_overhead_mb: f64,
    /// Live copies of one input object during streaming: running sum,
    /// incoming object and deserialization transients.
    pub streaming_multiplier: f64,
}

impl Default for PlatformLimits {
    fn default() -> Self {
        Self {
            max_memory_mb: 10_240.0,
            min_memory_mb: 128.0,
            max_timeout_s: 900.0,
            runtime_overhead_mb: 450.0,
            streaming_multiplier: 3.0,
        }
    }
}

impl PlatformLimits {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("max_memory_mb", self.max_memory_mb),
            ("min_memory_mb", self.min_memory_mb),
            ("max_timeout_s", self.max_timeout_s),
            ("streaming_multiplier", self.streaming_multiplier),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "limits.{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.runtime_overhead_mb >= 0.0) {
            return Err(Error::Config(
                "limits.runtime_overhead_mb must be >= 0".into(),
            ));
        }
        if self.min_memory_mb > self.max_memory_mb {
            return Err(Error::Config(
                "limits.min_memory_mb exceeds max_memory_mb".into(),
            ));
        }
        Ok(())
    }

    /// Largest per-object input a single function can stream.
    pub fn max_input_mb(&self) -> f64 {
        (self.max_memory_mb - self.runtime_overhead_mb) / self.streaming_multiplier
    }

    /// Memory to request for an invocation needing `required_mb`.
    pub fn provision(&self, required_mb: f64) -> u32 {
        required_mb
            .ceil()
            .clamp(self.min_memory_mb, self.max_memory_mb) as u32
    }
}

/// `multiplier * input + overhead`, in MB.
pub fn estimate_peak_memory(input_mb: f64, limits: &PlatformLimits) -> f64 {
    limits.streaming_multiplier * input_mb + limits.runtime_overhead_mb
}

/// Analytic two-buffer bound for streaming one shard: running sum plus one
/// incoming shard of `param_count / m` float32 values.
pub fn streaming_lower_bound(param_count: u64, m: u64) -> Result<f64> {
    if m < 1 {
        return Err(Error::InvalidArgument(
            "shard count must be at least 1".into(),
        ));
    }
    Ok(2.0 * (param_count as f64 / m as f64) * BYTES_PER_PARAM as f64 / BYTES_PER_MB)
}

/// Peak for an aggregator that buffers all `n` client shards before averaging,
/// plus the output buffer. A fitted model, not a streaming one.
pub fn collect_then_average_peak(n: u32, param_count: u64, m: u64) -> Result<f64> {
    if m < 1 || n < 1 {
        return Err(Error::InvalidArgument(
            "client and shard counts must be at least 1".into(),
        ));
    }
    Ok(
        (f64::from(n) + 1.0) * (param_count as f64 / m as f64) * BYTES_PER_PARAM as f64
            / BYTES_PER_MB,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FeasibilityVerdict {
    Feasible { required_mb: f64, utilization: f64 },
    Infeasible { required_mb: f64 },
}

impl FeasibilityVerdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, FeasibilityVerdict::Feasible { .. })
    }

    pub fn required_mb(&self) -> f64 {
        match *self {
            FeasibilityVerdict::Feasible { required_mb, .. }
            | FeasibilityVerdict::Infeasible { required_mb } => required_mb,
        }
    }
}

/// Whether an aggregator streaming `gradient_mb / m` sized objects fits the
/// platform memory ceiling.
pub fn check_feasibility(
    gradient_mb: f64,
    m: u64,
    limits: &PlatformLimits,
) -> Result<FeasibilityVerdict> {
    if !(gradient_mb > 0.0) || m < 1 {
        return Err(Error::InvalidArgument(format!(
            "feasibility needs gradient_mb > 0 and m >= 1, got {gradient_mb}, {m}"
        )));
    }
    let required_mb = estimate_peak_memory(gradient_mb / m as f64, limits);
    Ok(if required_mb <= limits.max_memory_mb {
        FeasibilityVerdict::Feasible {
            required_mb,
            utilization: required_mb / limits.max_memory_mb,
        }
    } else {
        FeasibilityVerdict::Infeasible { required_mb }
    })
}

/// Simulated FedAvg compute time for `bytes` accumulated at `throughput_mbps`.
pub fn compute_time_model(bytes: u64, throughput_mbps: f64) -> Result<f64> {
    if !(throughput_mbps > 0.0) {
        return Err(Error::InvalidArgument(
            "compute throughput must be positive".into(),
        ));
    }
    Ok(bytes as f64 / BYTES_PER_MB / throughput_mbps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::params_for_mb;

    #[test]
    fn peak_memory_examples() {
        let l = PlatformLimits::default();
        assert_eq!(estimate_peak_memory(2953.0, &l), 9309.0);
        assert_eq!(estimate_peak_memory(5120.0, &l), 15_810.0);
        assert_eq!(estimate_peak_memory(0.0, &l), 450.0);
        // a quarter of the GPT-2 Large gradient is 738.25 MB
        assert_eq!(estimate_peak_memory(2953.0 / 4.0, &l).ceil(), 2665.0);
        assert_eq!(estimate_peak_memory(738.0, &l), 2664.0);
    }

    #[test]
    fn lower_bound_examples() {
        let vgg = params_for_mb(512.3);
        assert!((streaming_lower_bound(vgg, 4).unwrap() - 256.0).abs() / 256.0 < 0.01);
        assert!((streaming_lower_bound(vgg, 1).unwrap() - 1024.6).abs() < 1e-3);
        let resnet = params_for_mb(42.7);
        assert_eq!(
            format!("{:.1}", streaming_lower_bound(resnet, 16).unwrap()),
            "5.3"
        );
        assert!(streaming_lower_bound(vgg, 0).is_err());
    }

    #[test]
    fn collect_then_average_tracks_measured_peaks() {
        // measured peaks at N=20: model MB, M, MB
        for (mb, m, measured) in [
            (512.3, 1, 10_788.0),
            (512.3, 16, 674.0),
            (42.7, 1, 898.8),
            (42.7, 4, 224.7),
        ] {
            let got = collect_then_average_peak(20, params_for_mb(mb), m).unwrap();
            assert!(
                (got - measured).abs() / measured < 0.01,
                "{mb} M={m}: {got}"
            );
        }
        assert!(collect_then_average_peak(0, 10, 1).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let l = PlatformLimits::default();
        match check_feasibility(2953.0, 1, &l).unwrap() {
            FeasibilityVerdict::Feasible {
                required_mb,
                utilization,
            } => {
                assert_eq!(required_mb, 9309.0);
                assert_eq!((utilization * 100.0).round(), 91.0);
            }
            v => panic!("{v:?}"),
        }
        assert_eq!(
            check_feasibility(5120.0, 1, &l).unwrap(),
            FeasibilityVerdict::Infeasible {
                required_mb: 15_810.0
            }
        );
        let v = check_feasibility(5120.0, 8, &l).unwrap();
        assert!(v.is_feasible());
        assert_eq!(v.required_mb(), 2370.0);
        assert!(check_feasibility(0.0, 1, &l).is_err());
    }

    #[test]
    fn integer_threshold_scan() {
        let l = PlatformLimits::default();
        let largest = (1..=10_240u32)
            .rev()
            .find(|&mb| check_feasibility(mb as f64, 1, &l).unwrap().is_feasible())
            .unwrap();
        assert_eq!(largest, 3263);
        assert!(!check_feasibility(3264.0, 1, &l).unwrap().is_feasible());
    }

    #[test]
    fn compute_model() {
        let t = compute_time_model(params_for_mb(512.3) * 4 * 20, 5225.0).unwrap();
        assert!((t - 1.96).abs() < 0.005, "{t}");
        let t16 = compute_time_model(params_for_mb(32.0) * 4 * 20, 5225.0).unwrap();
        assert!((t16 - 0.13).abs() / 0.13 < 0.10, "{t16}");
        assert_eq!(compute_time_model(0, 5225.0).unwrap(), 0.0);
        assert!(compute_time_model(1, 0.0).is_err());
    }

    #[test]
    fn provisioning_clamps() {
        let l = PlatformLimits::default();
        assert_eq!(l.provision(10.0), 128);
        assert_eq!(l.provision(834.2), 835);
        assert_eq!(l.provision(20_000.0), 10_240);
    }
}
