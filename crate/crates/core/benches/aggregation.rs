use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use gradsim::config::MODELS;
use gradsim::faas::Executor;
use gradsim::store::TransferModel;
use gradsim::topology::{simulate_round, sweep, ClientSource, GridPoint};
use gradsim::{Exec, GradientTensor, StreamingAccumulator, TopologyKind};

fn modes() -> Vec<(&'static str, Exec)> {
    let mut v = vec![("sequential", Exec::Sequential)];
    if Exec::default() != Exec::Sequential {
        v.push(("parallel", Exec::default()));
    }
    v
}

fn accumulate(c: &mut Criterion) {
    let params = 1 << 22;
    let clients: Vec<GradientTensor> = (0..8).map(|i| GradientTensor::random(params, i)).collect();
    let mut group = c.benchmark_group("accumulate");
    group.throughput(Throughput::Bytes(8 * params * 4));
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::new(name, params), |b| {
            b.iter(|| {
                let mut acc = StreamingAccumulator::with_exec(params, exec);
                for g in &clients {
                    acc.accumulate(g, 1.0).unwrap();
                }
                black_box(acc.finalize().unwrap())
            })
        });
    }
    group.finish();
}

fn materialized_round(c: &mut Criterion) {
    let mut group = c.benchmark_group("round_gradsharding_n20_m4");
    group.sample_size(10);
    for (name, exec) in modes() {
        let clients = ClientSource::default().clients(20, 1 << 20, exec);
        let executor = Executor::default().with_exec(exec);
        group.bench_function(name, |b| {
            b.iter(|| {
                simulate_round(
                    TopologyKind::GradsSharding { m: 4 },
                    &clients,
                    TransferModel::default(),
                    &executor,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn model_sweep(c: &mut Criterion) {
    let points: Vec<GridPoint> = MODELS
        .iter()
        .flat_map(|m| {
            [
                TopologyKind::GradsSharding { m: 4 },
                TopologyKind::LambdaFl,
                TopologyKind::Lifl,
            ]
            .map(|kind| GridPoint {
                kind,
                n: 20,
                model: m.name.to_string(),
                gradient_mb: m.gradient_mb,
            })
        })
        .collect();
    let mut group = c.benchmark_group("model_sweep");
    for (name, exec) in modes() {
        let executor = Executor::default().with_exec(exec);
        group.bench_function(name, |b| {
            b.iter(|| {
                sweep(
                    &points,
                    TransferModel::default(),
                    &executor,
                    ClientSource::default(),
                    exec,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, accumulate, materialized_round, model_sweep);
criterion_main!(benches);
