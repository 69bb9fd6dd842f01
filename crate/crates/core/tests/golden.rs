//! Frozen FedAvg output for 20 seeded clients of 1000 parameters.
//! Regenerate with `GRADSIM_BLESS=1 cargo test --test golden`.

use std::path::PathBuf;

use gradsim::faas::Executor;
use gradsim::store::TransferModel;
use gradsim::tensor::{read_golden, write_golden};
use gradsim::topology::{simulate_round, ClientSource};
use gradsim::{fedavg_flat, Exec, TopologyKind};

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/fedavg_n20_p1000.bin")
}

#[test]
fn flat_fedavg_matches_golden_file() {
    let clients = ClientSource::default().clients(20, 1000, Exec::Sequential);
    let got = fedavg_flat(&clients).unwrap();
    let path = golden_path();
    if std::env::var("GRADSIM_BLESS").is_ok_and(|v| v == "1") {
        write_golden(&path, got.values().unwrap()).unwrap();
    }
    let want = read_golden(&path).unwrap();
    assert_eq!(want.len(), 1000);
    let same = got
        .values()
        .unwrap()
        .iter()
        .zip(&want)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    assert!(same, "flat FedAvg drifted from {}", path.display());
}

#[test]
fn every_mode_and_sharding_reproduces_golden_file() {
    let want = read_golden(golden_path()).unwrap();
    for exec in [Exec::Sequential, Exec::default()] {
        let clients = ClientSource::default().clients(20, 1000, exec);
        for m in [1, 3, 4, 16] {
            let executor = Executor::default().with_exec(exec);
            let r = simulate_round(
                TopologyKind::GradsSharding { m },
                &clients,
                TransferModel::default(),
                &executor,
            )
            .unwrap();
            let got = r.result.values().unwrap();
            assert!(
                got.iter()
                    .zip(&want)
                    .all(|(a, b)| a.to_bits() == b.to_bits()),
                "{exec:?} M={m}"
            );
        }
    }
}
