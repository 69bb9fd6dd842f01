use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use gradsim::config::{resolve_model, ExperimentConfig};
use gradsim::econ::{cost_of_round, idle_ratio};
use gradsim::faas::Executor;
use gradsim::report::{human_table, write_csv, RoundRecord};
use gradsim::topology::{simulate_round, sweep, GridPoint, TopologyKind};
use gradsim::verify::{matches_oracle, run_all};
use gradsim::{Error, Exec};

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

const DEFAULT_IDLE_TABLE: &str = include_str!("../../data/idle_default.csv");

#[derive(Parser)]
#[command(
    name = "gradsim",
    version,
    about = "Serverless FL aggregation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one aggregation round and print its metrics.
    Simulate(RunArgs),
    /// Run a grid of rounds and write one CSV row per point.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated shard counts (axis m) or model names / MB sizes
        /// (axis model-size).
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Topologies to cross with the values; defaults to the configured one.
        #[arg(long, value_delimiter = ',')]
        topologies: Vec<String>,
    },
    /// Parameter-server idle ratio from training and aggregation times.
    Idle {
        /// CSV with columns model,t_train_ms,t_agg_ms. Defaults to the
        /// built-in four-model table.
        #[arg(long)]
        train_table: Option<PathBuf>,
    },
    /// Run the oracle, op-count and feasibility self-checks.
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    M,
    ModelSize,
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    topology: Option<String>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    m: Option<u64>,
    /// Registry model name (resnet18, vgg16, gpt2-medium, gpt2-large, synthetic-5gb).
    #[arg(long, conflicts_with = "gradient_mb")]
    model: Option<String>,
    #[arg(long)]
    gradient_mb: Option<f64>,
    /// Per-stream S3 throughput in MB/s, applied to reads and writes.
    #[arg(long)]
    throughput: Option<f64>,
    #[arg(long)]
    write_throughput: Option<f64>,
    #[arg(long)]
    per_op_latency: Option<f64>,
    #[arg(long)]
    compute_throughput: Option<f64>,
    /// Fixed function memory in MB instead of auto-provisioning.
    #[arg(long)]
    memory_mb: Option<u32>,
    #[arg(long)]
    cold_start: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<u32>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl RunArgs {
    fn effective(&self) -> Result<ExperimentConfig, Error> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(t) = &self.topology {
            c.topology = t.clone();
        }
        if let Some(n) = self.n {
            c.n = n;
        }
        if let Some(m) = self.m {
            c.m = m;
        }
        if let Some(model) = &self.model {
            c.model = Some(model.clone());
            c.gradient_mb = None;
        }
        if let Some(mb) = self.gradient_mb {
            c.gradient_mb = Some(mb);
            c.model = None;
        }
        if let Some(t) = self.throughput {
            c.transfer.read_throughput = t;
            c.transfer.write_throughput = t;
        }
        if let Some(t) = self.write_throughput {
            c.transfer.write_throughput = t;
        }
        if let Some(l) = self.per_op_latency {
            c.transfer.per_op_latency = l;
        }
        if let Some(t) = self.compute_throughput {
            c.executor.compute_throughput = t;
        }
        if let Some(mb) = self.memory_mb {
            c.executor.memory_override_mb = Some(mb);
        }
        if self.cold_start {
            c.executor.cold_start = true;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(r) = self.repetitions {
            c.repetitions = r;
        }
        if let Some(d) = &self.out_dir {
            c.output_dir = Some(d.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Serialize)]
struct InfeasibleRecord<'a> {
    status: &'static str,
    topology: String,
    model: String,
    gradient_mb: f64,
    required_mb: f64,
    limit_mb: f64,
    config: &'a ExperimentConfig,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_CONFIG,
        Error::Infeasible { .. } | Error::OutOfMemory { .. } | Error::Timeout { .. } => {
            EXIT_INFEASIBLE
        }
        _ => EXIT_INTERNAL,
    }
}

/// Opens `name` under the output directory, or stdout when none is set.
/// `--out-dir` beats the environment, which beats the config file.
fn output(
    args: &RunArgs,
    cfg: &ExperimentConfig,
    name: &str,
) -> io::Result<(Box<dyn Write>, Option<PathBuf>)> {
    match args.out_dir.clone().or_else(|| cfg.output_dir()) {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(name);
            Ok((Box::new(File::create(&path)?), Some(path)))
        }
        None => Ok((Box::new(io::stdout().lock()), None)),
    }
}

fn executor(cfg: &ExperimentConfig) -> Executor {
    Executor::new(cfg.limits, cfg.executor)
}

fn simulate(args: &RunArgs) -> Result<u8, Error> {
    let cfg = args.effective()?;
    let kind = cfg.kind()?;
    let (model, gradient_mb) = cfg.resolved_model()?;
    let params = gradsim::tensor::params_for_mb(gradient_mb);
    let ex = executor(&cfg);
    let (mut out, path) = output(args, &cfg, "round.json")?;

    for rep in 0..cfg.repetitions {
        let clients = cfg.client_source().clients(cfg.n, params, Exec::default());
        let metrics = match simulate_round(kind, &clients, cfg.transfer, &ex) {
            Ok(m) => m,
            Err(e) => match infeasible_bounds(&e) {
                Some((required_mb, limit_mb)) => {
                    let rec = InfeasibleRecord {
                        status: "infeasible",
                        topology: kind.to_string(),
                        model,
                        gradient_mb,
                        required_mb,
                        limit_mb,
                        config: &cfg,
                    };
                    serde_json::to_writer_pretty(&mut out, &rec).map_err(io::Error::other)?;
                    writeln!(out)?;
                    eprintln!("{e}");
                    return Ok(EXIT_INFEASIBLE);
                }
                None => return Err(e),
            },
        };
        let cost = cost_of_round(&metrics, &cfg.prices);
        if metrics.high_utilization() {
            eprintln!(
                "warning: aggregators use {:.0}% of the {} MB memory ceiling",
                100.0 * metrics.memory_utilization,
                cfg.limits.max_memory_mb
            );
        }
        let oracle = if metrics.result.is_phantom() {
            None
        } else {
            Some(matches_oracle(kind, &metrics.result, &clients)?)
        };
        #[derive(Serialize)]
        struct WithOracle<'a, C: Serialize> {
            #[serde(flatten)]
            record: RoundRecord<'a, C>,
            repetition: u32,
            #[serde(skip_serializing_if = "Option::is_none")]
            matches_flat_oracle: Option<bool>,
        }
        let rec = WithOracle {
            record: RoundRecord {
                status: "ok",
                config: &cfg,
                metrics: &metrics,
                cost,
                high_memory_utilization: metrics.high_utilization(),
            },
            repetition: rep,
            matches_flat_oracle: oracle,
        };
        if cfg.repetitions == 1 {
            serde_json::to_writer_pretty(&mut out, &rec).map_err(io::Error::other)?;
        } else {
            serde_json::to_writer(&mut out, &rec).map_err(io::Error::other)?;
        }
        writeln!(out)?;
        let table = human_table(&metrics, &cost);
        if path.is_some() {
            print!("{table}");
        } else {
            eprint!("{table}");
        }
        if oracle == Some(false) {
            eprintln!("error: aggregated result differs from the flat FedAvg oracle");
            return Ok(EXIT_INTERNAL);
        }
    }
    if let Some(p) = path {
        eprintln!("wrote {}", p.display());
    }
    Ok(0)
}

/// Required and available memory for errors that mean "does not fit".
fn infeasible_bounds(e: &Error) -> Option<(f64, f64)> {
    match e.root() {
        Error::Infeasible {
            required_mb,
            limit_mb,
        } => Some((*required_mb, *limit_mb)),
        Error::OutOfMemory {
            required_mb,
            allocated_mb,
            ..
        } => Some((*required_mb, f64::from(*allocated_mb))),
        _ => None,
    }
}

fn run_sweep(
    args: &RunArgs,
    axis: Axis,
    values: &[String],
    topologies: &[String],
) -> Result<u8, Error> {
    let cfg = args.effective()?;
    let values: Vec<&str> = values
        .iter()
        .map(|v| v.trim())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(Error::Config(
            "values: at least one grid value is required".into(),
        ));
    }
    let kinds: Vec<String> = if topologies.is_empty() {
        vec![cfg.topology.clone()]
    } else {
        topologies.to_vec()
    };
    let (model, gradient_mb) = cfg.resolved_model()?;
    let mut points = Vec::new();
    for name in &kinds {
        for v in &values {
            let point = match axis {
                Axis::M => {
                    let m: u64 = v.parse().map_err(|_| {
                        Error::Config(format!("values: {v:?} is not a shard count"))
                    })?;
                    GridPoint {
                        kind: TopologyKind::parse(name, m)
                            .map_err(|e| Error::Config(format!("topologies: {e}")))?,
                        n: cfg.n,
                        model: model.clone(),
                        gradient_mb,
                    }
                }
                Axis::ModelSize => {
                    let (model, mb) = resolve_model(v)?;
                    GridPoint {
                        kind: TopologyKind::parse(name, cfg.m)
                            .map_err(|e| Error::Config(format!("topologies: {e}")))?,
                        n: cfg.n,
                        model,
                        gradient_mb: mb,
                    }
                }
            };
            points.push(point);
        }
    }
    let results = sweep(
        &points,
        cfg.transfer,
        &executor(&cfg),
        cfg.client_source(),
        Exec::default(),
    )?;
    for r in &results {
        if let Some(m) = r.metrics() {
            if m.high_utilization() {
                eprintln!(
                    "warning: {} on {} uses {:.0}% of the memory ceiling",
                    r.point.kind,
                    r.point.model,
                    100.0 * m.memory_utilization
                );
            }
        }
    }
    let (out, path) = output(args, &cfg, "sweep.csv")?;
    write_csv(out, &results, &cfg.prices)?;
    match path {
        Some(p) => {
            let sidecar = p.with_extension("config.toml");
            std::fs::write(&sidecar, cfg.to_toml())?;
            eprintln!("wrote {} and {}", p.display(), sidecar.display());
        }
        None => {
            for line in cfg.to_toml().lines() {
                eprintln!("# {line}");
            }
        }
    }
    Ok(0)
}

#[derive(Deserialize)]
struct IdleRow {
    model: String,
    t_train_ms: f64,
    t_agg_ms: f64,
}

fn idle(table: Option<&Path>) -> Result<u8, Error> {
    let text = match table {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Config(format!("train-table: cannot read {}: {e}", p.display())))?,
        None => DEFAULT_IDLE_TABLE.to_string(),
    };
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, row) in rdr.deserialize::<IdleRow>().enumerate() {
        let row = row.map_err(|e| Error::Config(format!("train-table row {}: {e}", i + 1)))?;
        let report = idle_ratio(row.t_train_ms, row.t_agg_ms).map_err(|e| {
            Error::Config(format!("train-table row {} ({}): {e}", i + 1, row.model))
        })?;
        rows.push((row.model, report));
    }
    if rows.is_empty() {
        return Err(Error::Config("train-table: no rows".into()));
    }
    let mut out = io::stdout().lock();
    writeln!(out, "model,t_train_ms,t_agg_ms,ps_idle_pct")?;
    for (model, r) in rows {
        if r.degenerate {
            eprintln!("warning: {model} has zero aggregation time; idle ratio is the 100% limit");
        }
        writeln!(
            out,
            "{model},{},{},{:.1}",
            r.t_train_ms,
            r.t_agg_ms,
            100.0 * r.idle_ratio
        )?;
    }
    Ok(0)
}

fn verify() -> Result<u8, Error> {
    let suites = run_all(Exec::default());
    let mut ok = true;
    for s in &suites {
        if s.passed() {
            println!("PASS {} ({} cases)", s.name, s.cases);
        } else {
            ok = false;
            println!(
                "FAIL {} ({} of {} cases)",
                s.name,
                s.failures.len(),
                s.cases
            );
            for f in &s.failures {
                println!("  {f}");
            }
        }
    }
    Ok(if ok { 0 } else { EXIT_INTERNAL })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Sweep {
            run,
            axis,
            values,
            topologies,
        } => run_sweep(run, *axis, values, topologies),
        Command::Idle { train_table } => idle(train_table.as_deref()),
        Command::Verify => verify(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
