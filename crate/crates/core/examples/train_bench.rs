//! Trains a small bench of cells and persists it as CSV/JSON.

use gradsign::arch::SearchSpaceSpec;
use gradsign::trainer::*;

fn main() -> gradsign::Result<()> {
    let data = make_synthetic_dataset(DatasetKind::TwoSpirals, 800, 2, 2, 0.1, 1)?;
    let config = TrainConfig { epochs: 20, ..TrainConfig::default() };
    let setup = BenchSetup { space: SearchSpaceSpec::default(), dataset: &data, config: &config, init_seed: bench_init_seed(0) };
    let dir = std::env::temp_dir().join("gradsign-train-bench");
    let path = dir.join("bench.csv");
    let ids = [0, 1562, 3906, 7812, 9765, 12_000, 15_624];
    let table = build_bench(&setup, &ids, 2, Some(&path))?;
    for (id, r) in table.iter() {
        println!("arch {id:>5}: val {:.3} test {:.3} loss {:.3} simulated {:.3}s", r.val_acc, r.test_acc, r.train_loss, r.cost_seconds);
    }
    assert_eq!(BenchTable::load(&path)?.len(), ids.len());
    println!("saved to {}", path.display());
    Ok(())
}
