use std::fs;

use gradsign::arch::{CellArch, SearchSpaceSpec};
use gradsign::tensor::{init_params, NetworkSpec};
use gradsign::trainer::*;

fn spirals() -> Dataset {
    make_synthetic_dataset(DatasetKind::TwoSpirals, 1000, 2, 2, 0.1, 11).unwrap()
}

#[test]
fn spirals_are_not_linearly_separable_but_a_dense_cell_learns_them() {
    let data = spirals();
    let config = TrainConfig::default();
    let linear = NetworkSpec::mlp(2, &[], 2).unwrap();
    let r = train(&linear, &init_params(&linear, 0), &data, &config).unwrap();
    assert!(r.test_acc < 0.70, "linear {}", r.test_acc);

    // every edge a relu, two stacked cells
    let dense = CellArch::from_indices([2; 6]).unwrap();
    let setup = BenchSetup { space: SearchSpaceSpec::default(), dataset: &data, config: &config, init_seed: 0 };
    let r = setup.train_arch(dense.id()).unwrap();
    assert!(r.test_acc > 0.85, "dense cell {}", r.test_acc);
    assert_eq!(r.curve.len(), config.epochs);
}

#[test]
fn reported_accuracy_is_from_the_best_validation_epoch() {
    let data = spirals();
    let config = TrainConfig { epochs: 15, ..TrainConfig::default() };
    let setup = BenchSetup { space: SearchSpaceSpec::default(), dataset: &data, config: &config, init_seed: 3 };
    let r = setup.train_arch(CellArch::from_indices([3, 2, 1, 3, 2, 4]).unwrap().id()).unwrap();
    let best = r.curve.iter().map(|e| e.val_acc).fold(f64::MIN, f64::max);
    let first = r.curve.iter().position(|e| e.val_acc == best).unwrap();
    assert_eq!(r.val_acc, best);
    assert_eq!(r.test_acc, r.curve[first].test_acc);
    assert_eq!(r.val_acc_at(first + 1), best);
    assert_eq!(r.val_acc_at(100), r.curve.last().unwrap().val_acc);
}

#[test]
fn simulated_cost_scales_with_params_and_passes() {
    assert!((simulated_cost(1000, 50) - 1000.0 * 50.0 * SIM_SECONDS_PER_PARAM_SAMPLE).abs() < 1e-15);
    assert_eq!(simulated_cost(10, 20) * 2.0, simulated_cost(20, 20));
}

/// Table equality ignoring measured wall clock, which is not persisted.
fn assert_same(a: &BenchTable, b: &BenchTable) {
    let strip = |t: &BenchTable| -> Vec<(u32, TrainedResult)> {
        t.iter().map(|(id, r)| (id, TrainedResult { wall_seconds: 0.0, ..r.clone() })).collect()
    };
    assert_eq!((&a.dataset_fingerprint, &a.config_fingerprint, a.space), (&b.dataset_fingerprint, &b.config_fingerprint, b.space));
    assert_eq!(strip(a), strip(b));
}

fn small_setup<'a>(data: &'a Dataset, config: &'a TrainConfig) -> BenchSetup<'a> {
    BenchSetup { space: SearchSpaceSpec { cell_width: 4, num_cells: 1 }, dataset: data, config, init_seed: 5 }
}

#[test]
fn worker_count_does_not_change_the_bench() {
    let data = make_synthetic_dataset(DatasetKind::TwoSpirals, 300, 2, 2, 0.1, 1).unwrap();
    let config = TrainConfig { epochs: 3, ..TrainConfig::default() };
    let setup = small_setup(&data, &config);
    let ids = [7, 1200, 4001, 9999, 15_000, 31];
    let a = build_bench(&setup, &ids, 1, None).unwrap();
    let b = build_bench(&setup, &ids, 4, None).unwrap();
    assert_same(&a, &b);
    assert_eq!(a.len(), 6);
    assert!(!a.dataset_fingerprint.is_empty() && !a.config_fingerprint.is_empty());
}

#[test]
fn persisted_bench_round_trips_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.csv");
    let data = make_synthetic_dataset(DatasetKind::TwoSpirals, 300, 2, 2, 0.1, 1).unwrap();
    let config = TrainConfig { epochs: 2, ..TrainConfig::default() };
    let setup = small_setup(&data, &config);
    let full = build_bench(&setup, &[10, 20], 1, Some(&path)).unwrap();
    assert_same(&BenchTable::load(&path).unwrap(), &full);
    let (csv, json, curves) = bench_paths(&path);
    assert!(csv.exists() && json.exists() && curves.exists());

    // a partial log from an interrupted build is picked up as-is
    let mut planted = full.get(10).unwrap().clone();
    planted.val_acc = 0.123;
    let line = serde_json::to_string(&(&full.config_fingerprint, &planted)).unwrap();
    fs::write(path.with_extension("partial.jsonl"), format!("{line}\n{{\"torn")).unwrap();
    let resumed = build_bench(&setup, &[10, 20], 1, Some(&path)).unwrap();
    assert_eq!(resumed.get(10).unwrap().val_acc, 0.123);
    assert_eq!(resumed.get(20).unwrap().curve, full.get(20).unwrap().curve);
    assert!(!path.with_extension("partial.jsonl").exists());

    // entries trained under another config are ignored
    let other = serde_json::to_string(&("different", &planted)).unwrap();
    fs::write(path.with_extension("partial.jsonl"), format!("{other}\n")).unwrap();
    let fresh = build_bench(&setup, &[10, 20], 1, Some(&path)).unwrap();
    assert_same(&fresh, &full);
}

#[test]
fn dataset_fingerprint_tracks_content() {
    let a = make_synthetic_dataset(DatasetKind::TwoSpirals, 300, 2, 2, 0.1, 1).unwrap();
    let b = make_synthetic_dataset(DatasetKind::TwoSpirals, 300, 2, 2, 0.1, 1).unwrap();
    let c = make_synthetic_dataset(DatasetKind::TwoSpirals, 300, 2, 2, 0.1, 2).unwrap();
    assert_eq!(a.fingerprint(), b.fingerprint());
    assert_ne!(a.fingerprint(), c.fingerprint());
    let n = a.indices(Split::Train).len() + a.indices(Split::Val).len() + a.indices(Split::Test).len();
    assert_eq!(n, a.len());
}
