//! Self-check suites behind `gradsim verify`.

use serde::Serialize;

use crate::accumulate::fedavg_flat;
use crate::error::Result;
use crate::exec::Exec;
use crate::faas::{
    check_feasibility, estimate_peak_memory, Executor, ExecutorConfig, PlatformLimits,
};
use crate::store::TransferModel;
use crate::tensor::GradientTensor;
use crate::topology::{predicted_s3_ops, simulate_round, ClientSource, PredictedOps, TopologyKind};

/// Element-wise tolerance for tree topologies, relative to each coordinate's
/// mean absolute client value.
pub const TREE_RTOL: f32 = 1e-5;

/// Largest `|result - oracle|` over the coordinate scale `mean_i |g_i|`.
/// Coordinates whose scale is zero must match exactly (else `inf`).
pub fn scaled_error(
    result: &GradientTensor,
    oracle: &GradientTensor,
    clients: &[GradientTensor],
) -> Result<f32> {
    let (r, o) = (result.values()?, oracle.values()?);
    let mut scale = vec![0.0f64; o.len()];
    for c in clients {
        for (s, v) in scale.iter_mut().zip(c.values()?) {
            *s += v.abs() as f64;
        }
    }
    let n = clients.len() as f64;
    Ok(r.iter()
        .zip(o)
        .zip(&scale)
        .map(|((a, b), s)| {
            let diff = (a - b).abs();
            if diff == 0.0 {
                0.0
            } else if *s == 0.0 {
                f32::INFINITY
            } else {
                (diff as f64 / (s / n)) as f32
            }
        })
        .fold(0.0, f32::max))
}

/// Whether `result` matches the flat mean under the topology's contract:
/// bit-identical for sharding, within [`TREE_RTOL`] for trees.
pub fn matches_oracle(
    kind: TopologyKind,
    result: &GradientTensor,
    clients: &[GradientTensor],
) -> Result<bool> {
    let oracle = fedavg_flat(clients)?;
    Ok(match kind {
        TopologyKind::GradsSharding { .. } => result.bit_eq(&oracle),
        _ => scaled_error(result, &oracle, clients)? <= TREE_RTOL,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn executor() -> Executor {
    Executor::new(PlatformLimits::default(), ExecutorConfig::default())
}

/// Small materialized rounds across every topology, N in 1..=12, M in 1..=5.
pub fn oracle_suite(exec: Exec) -> SuiteResult {
    let mut grid = Vec::new();
    for n in 1..=12u32 {
        for m in 1..=5u64 {
            grid.push((TopologyKind::GradsSharding { m }, n));
        }
        grid.push((TopologyKind::LambdaFl, n));
        grid.push((TopologyKind::Lifl, n));
    }
    let failures = exec.map(&grid, |&(kind, n)| {
        let params = 37 + n as u64;
        let clients = ClientSource {
            materialize_max_mb: f64::MAX,
            seed: 1000 * n as u64,
        }
        .clients(n, params, Exec::Sequential);
        let ok = simulate_round(kind, &clients, TransferModel::default(), &executor())
            .and_then(|m| matches_oracle(kind, &m.result, &clients));
        match ok {
            Ok(true) => None,
            Ok(false) => Some(format!(
                "{} N={n} M={}: result differs from flat mean",
                kind.name(),
                kind.shard_count()
            )),
            Err(e) => Some(format!(
                "{} N={n} M={}: {e}",
                kind.name(),
                kind.shard_count()
            )),
        }
    });
    SuiteResult {
        name: "oracle-equivalence",
        cases: grid.len(),
        failures: failures.into_iter().flatten().collect(),
    }
}

/// Executed PUT/GET counts against a prediction function.
pub fn op_count_suite_with(
    predict: impl Fn(TopologyKind, u32) -> PredictedOps + Sync,
    exec: Exec,
) -> SuiteResult {
    let mut grid = Vec::new();
    for n in [1u32, 2, 3, 5, 7, 12, 20, 33, 64] {
        for m in [1u64, 2, 3, 4, 8, 16] {
            grid.push((TopologyKind::GradsSharding { m }, n));
        }
        grid.push((TopologyKind::LambdaFl, n));
        grid.push((TopologyKind::Lifl, n));
    }
    let failures = exec.map(&grid, |&(kind, n)| {
        let label = format!("{} N={n} M={}", kind.name(), kind.shard_count());
        let clients = vec![GradientTensor::phantom(1024); n as usize];
        let metrics = match simulate_round(kind, &clients, TransferModel::default(), &executor()) {
            Ok(m) => m,
            Err(e) => return Some(format!("{label}: {e}")),
        };
        let want = predict(kind, n);
        let s = &metrics.stats;
        let got = (
            s.client_upload.puts + s.aggregator.puts,
            s.aggregator.gets,
            s.client_readback.gets,
        );
        (got != (want.puts, want.gets_agg, want.gets_clients)).then(|| {
            format!(
                "{label}: executed {}/{}/{} puts/agg-gets/client-gets, formula {}/{}/{}",
                got.0, got.1, got.2, want.puts, want.gets_agg, want.gets_clients
            )
        })
    });
    let mut failures: Vec<String> = failures.into_iter().flatten().collect();
    for (kind, total) in [
        (TopologyKind::GradsSharding { m: 4 }, 244),
        (TopologyKind::LambdaFl, 69),
        (TopologyKind::Lifl, 81),
    ] {
        let got = predict(kind, 20).total();
        if got != total {
            failures.push(format!(
                "{} N=20 M={}: formula gives {got} ops, expected {total}",
                kind.name(),
                kind.shard_count()
            ));
        }
    }
    SuiteResult {
        name: "op-count",
        cases: grid.len() + 3,
        failures,
    }
}

pub fn op_count_suite(exec: Exec) -> SuiteResult {
    op_count_suite_with(predicted_s3_ops, exec)
}

/// Memory formula anchors and the integer feasibility boundary.
pub fn feasibility_suite() -> SuiteResult {
    let l = PlatformLimits::default();
    let mut failures = Vec::new();
    let mut check = |label: String, ok: bool| {
        if !ok {
            failures.push(label);
        }
    };
    for (input, want) in [
        (2953.0, 9309.0),
        (5120.0, 15_810.0),
        (2953.0 / 4.0, 2665.0),
        (5120.0 / 8.0, 2370.0),
    ] {
        let got = estimate_peak_memory(input, &l).ceil();
        check(
            format!("peak memory for {input} MB: got {got}, want {want}"),
            got == want,
        );
    }
    let at = |mb: f64| {
        check_feasibility(mb, 1, &l)
            .map(|v| v.is_feasible())
            .unwrap_or(false)
    };
    check("3263 MB must be feasible at M=1".into(), at(3263.0));
    check("3264 MB must be infeasible at M=1".into(), !at(3264.0));
    for m in 1..=32u64 {
        let f = |m| {
            check_feasibility(5120.0, m, &l)
                .map(|v| v.is_feasible())
                .unwrap_or(false)
        };
        check(
            format!("feasibility not monotone in M at {m}"),
            !f(m) || f(m + 1),
        );
    }
    SuiteResult {
        name: "feasibility-boundary",
        cases: 6 + 32,
        failures,
    }
}

pub fn run_all(exec: Exec) -> Vec<SuiteResult> {
    vec![
        oracle_suite(exec),
        op_count_suite(exec),
        feasibility_suite(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        for s in run_all(Exec::default()) {
            assert!(s.passed(), "{}: {:?}", s.name, s.failures);
        }
    }

    #[test]
    fn mutated_formula_is_named() {
        let broken = |kind: TopologyKind, n: u32| {
            let mut p = predicted_s3_ops(kind, n);
            if let TopologyKind::GradsSharding { m: 4 } = kind {
                p.puts += 1;
            }
            p
        };
        let s = op_count_suite_with(broken, Exec::default());
        assert!(!s.passed());
        assert!(s
            .failures
            .iter()
            .any(|f| f.starts_with("gradsharding N=20 M=4")));
    }

    #[test]
    fn scaled_error_flags_nonzero_diff_on_zero_scale() {
        let zero = GradientTensor::from_vec(vec![0.0]);
        let off = GradientTensor::from_vec(vec![1e-9]);
        assert_eq!(
            scaled_error(&off, &zero, std::slice::from_ref(&zero)).unwrap(),
            f32::INFINITY
        );
        assert_eq!(
            scaled_error(&zero, &zero, std::slice::from_ref(&zero)).unwrap(),
            0.0
        );
    }
}
