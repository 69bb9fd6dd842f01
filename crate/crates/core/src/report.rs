//! CSV and JSON renderings of simulation results.

use std::io::Write;

use serde::Serialize;

use crate::econ::{cost_of_round, CostReport, PriceSheet};
use crate::error::Result;
use crate::topology::{RoundMetrics, SweepOutcome, SweepPoint};

/// Fixed CSV column order.
pub const CSV_COLUMNS: [&str; 17] = [
    "topology",
    "N",
    "M",
    "model",
    "shard_mb",
    "s3_read_s",
    "compute_s",
    "s3_write_s",
    "wall_clock_s",
    "speedup_vs_first",
    "puts",
    "gets",
    "lambda_cost",
    "s3_cost",
    "cost_per_1k",
    "peak_mem_mb",
    "feasible",
];

/// One sweep grid point. Infeasible points leave the timing, op and cost
/// fields empty.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsvRow {
    pub topology: String,
    #[serde(rename = "N")]
    pub n: u32,
    #[serde(rename = "M")]
    pub m: u64,
    pub model: String,
    pub shard_mb: f64,
    pub s3_read_s: Option<f64>,
    pub compute_s: Option<f64>,
    pub s3_write_s: Option<f64>,
    pub wall_clock_s: Option<f64>,
    pub speedup_vs_first: Option<f64>,
    pub puts: Option<u64>,
    pub gets: Option<u64>,
    pub lambda_cost: Option<f64>,
    pub s3_cost: Option<f64>,
    pub cost_per_1k: Option<f64>,
    pub peak_mem_mb: f64,
    pub feasible: bool,
}

fn round_to(v: f64, places: i32) -> f64 {
    let p = 10f64.powi(places);
    (v * p).round() / p
}

impl CsvRow {
    pub fn from_point(p: &SweepPoint, prices: &PriceSheet) -> Self {
        let m = p.point.kind.shard_count();
        let shard_mb = round_to(p.point.gradient_mb / m as f64, 4);
        match &p.outcome {
            SweepOutcome::Ran(metrics) => {
                let cost = cost_of_round(metrics, prices);
                let ops = metrics.stats.total();
                let b = metrics.breakdown;
                CsvRow {
                    topology: p.point.kind.name().into(),
                    n: p.point.n,
                    m,
                    model: p.point.model.clone(),
                    shard_mb,
                    s3_read_s: Some(round_to(b.s3_read_s, 4)),
                    compute_s: Some(round_to(b.compute_s, 4)),
                    s3_write_s: Some(round_to(b.s3_write_s, 4)),
                    wall_clock_s: Some(round_to(metrics.wall_clock_s, 4)),
                    speedup_vs_first: p.speedup_vs_first.map(|s| round_to(s, 4)),
                    puts: Some(ops.puts),
                    gets: Some(ops.gets),
                    lambda_cost: Some(round_to(cost.lambda_cost, 9)),
                    s3_cost: Some(round_to(cost.s3_cost, 9)),
                    cost_per_1k: Some(round_to(cost.per_1k_rounds, 6)),
                    peak_mem_mb: metrics.peak_memory_estimate_mb.ceil(),
                    feasible: true,
                }
            }
            SweepOutcome::Infeasible { required_mb, .. } => CsvRow {
                topology: p.point.kind.name().into(),
                n: p.point.n,
                m,
                model: p.point.model.clone(),
                shard_mb,
                s3_read_s: None,
                compute_s: None,
                s3_write_s: None,
                wall_clock_s: None,
                speedup_vs_first: None,
                puts: None,
                gets: None,
                lambda_cost: None,
                s3_cost: None,
                cost_per_1k: None,
                peak_mem_mb: required_mb.ceil(),
                feasible: false,
            },
        }
    }
}

pub fn write_csv<W: Write>(out: W, points: &[SweepPoint], prices: &PriceSheet) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(CsvRow::from_point(p, prices))
            .map_err(|e| crate::error::Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// JSON document for one simulated round.
#[derive(Serialize)]
pub struct RoundRecord<'a, C: Serialize> {
    pub status: &'static str,
    pub config: &'a C,
    pub metrics: &'a RoundMetrics,
    pub cost: CostReport,
    pub high_memory_utilization: bool,
}

/// Fixed-width summary for terminals.
pub fn human_table(m: &RoundMetrics, cost: &CostReport) -> String {
    let ops = m.stats.total();
    let mut s = String::new();
    let mut line = |k: &str, v: String| s.push_str(&format!("{k:<22}{v}\n"));
    line("topology", m.topology.to_string());
    line("clients", m.n.to_string());
    line(
        "gradient",
        format!("{:.1} MB (shard {:.1} MB)", m.gradient_mb, m.shard_mb),
    );
    line(
        "invocations",
        format!("{} in {} phase(s)", m.invocation_count, m.phases.len()),
    );
    line("wall clock", format!("{:.2} s", m.wall_clock_s));
    line(
        "  read/compute/write",
        format!(
            "{:.2} / {:.2} / {:.2} s",
            m.breakdown.s3_read_s, m.breakdown.compute_s, m.breakdown.s3_write_s
        ),
    );
    line(
        "s3 ops",
        format!(
            "{} PUTs + {} GETs = {} (agg GETs {}, client GETs {})",
            ops.puts,
            ops.gets,
            ops.ops(),
            m.stats.aggregator.gets,
            m.stats.client_readback.gets
        ),
    );
    line(
        "memory",
        format!(
            "{:.0} MB peak estimate, {} MB allocated ({:.0}% of limit)",
            m.peak_memory_estimate_mb,
            m.max_allocated_mb,
            100.0 * m.memory_utilization
        ),
    );
    line("billed", format!("{:.3} GB-s", m.billed_gb_seconds));
    line(
        "cost/round",
        format!(
            "${:.6} (lambda ${:.6} + s3 ${:.6})",
            cost.total, cost.lambda_cost, cost.s3_cost
        ),
    );
    line("cost/1k rounds", format!("${:.2}", cost.per_1k_rounds));
    s
}
