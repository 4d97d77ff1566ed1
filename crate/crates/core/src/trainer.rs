//! Synthetic classification data, SGD training to obtain ground-truth
//! accuracies, and the persisted architecture → accuracy lookup table.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arch::{decode_arch, materialize, SearchSpaceSpec};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::tensor::{
    forward_pass, init_params, mean_loss_gradient, unit_f64, Batch, Labels, LossKind, Model, ParamVector, Tensor,
};

/// Simulated cost of pushing one sample through a model with one
/// parameter, forward and backward. Costs are charged from this model
/// rather than the wall clock so that benches and search traces stay
/// reproducible.
pub const SIM_SECONDS_PER_PARAM_SAMPLE: f64 = 1e-7;

/// Simulated seconds for `sample_passes` forward/backward passes through a
/// model with `param_count` parameters.
pub fn simulated_cost(param_count: usize, sample_passes: usize) -> f64 {
    SIM_SECONDS_PER_PARAM_SAMPLE * param_count as f64 * sample_passes as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    GaussianBlobs,
    TwoSpirals,
}

/// Arm winding of the spiral generator, in full turns.
const SPIRAL_TURNS: f64 = 1.5;
const BLOB_RADIUS: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub seed: u64,
    pub classes: usize,
    pub noise: f64,
    inputs: Tensor,
    labels: Vec<usize>,
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    let u1 = 1.0 - unit_f64(rng);
    let u2 = unit_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn make_synthetic_dataset(
    kind: DatasetKind,
    n: usize,
    d: usize,
    classes: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {classes}")));
    }
    if n < classes * 10 {
        return Err(Error::InvalidArgument(format!(
            "{n} samples cannot give {classes} balanced classes of at least 10"
        )));
    }
    if d == 0 || (kind == DatasetKind::TwoSpirals && d < 2) {
        return Err(Error::InvalidArgument(format!("input dimension {d} too small for {kind:?}")));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::InvalidArgument(format!("noise must be finite and >= 0, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = 2.0 * std::f64::consts::PI;
    let mut data = Vec::with_capacity(n * d);
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    for &c in &labels {
        let phase = tau * c as f64 / classes as f64;
        let mut point = vec![0.0; d];
        match kind {
            DatasetKind::TwoSpirals => {
                let t = unit_f64(&mut rng);
                let angle = t * SPIRAL_TURNS * tau + phase;
                point[0] = t * angle.cos();
                point[1] = t * angle.sin();
            }
            DatasetKind::GaussianBlobs => {
                if d == 1 {
                    point[0] = BLOB_RADIUS * c as f64;
                } else {
                    point[0] = BLOB_RADIUS * phase.cos();
                    point[1] = BLOB_RADIUS * phase.sin();
                }
            }
        }
        for v in point.iter_mut() {
            *v += noise * gaussian(&mut rng);
        }
        data.extend(point);
    }
    // Stratified 70/15/15 split keeps every split class-balanced.
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, &mut rng);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..classes {
        let members: Vec<usize> = order.iter().copied().filter(|&i| labels[i] == c).collect();
        let n_train = members.len() * 70 / 100;
        let n_val = members.len() * 15 / 100;
        train.extend_from_slice(&members[..n_train]);
        val.extend_from_slice(&members[n_train..n_train + n_val]);
        test.extend_from_slice(&members[n_train + n_val..]);
    }
    let rank: Vec<usize> = {
        let mut r = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            r[i] = pos;
        }
        r
    };
    for split in [&mut train, &mut val, &mut test] {
        split.sort_by_key(|&i| rank[i]);
    }
    Ok(Dataset { kind, seed, classes, noise, inputs: Tensor::matrix(n, d, data)?, labels, train, val, test })
}

pub(crate) fn shuffle<T>(items: &mut [T], rng: &mut impl Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let inputs = self.inputs.select_rows(indices);
        let labels = Labels::Classes(indices.iter().map(|&i| self.labels[i]).collect());
        Batch::new(inputs, labels).expect("rows and labels agree")
    }

    pub fn split_batch(&self, split: Split) -> Batch {
        self.batch(self.indices(split))
    }

    /// The first `size` training samples under a `seed`-determined shuffle.
    pub fn scoring_batch(&self, size: usize, seed: u64) -> Result<Batch> {
        if size == 0 || size > self.train.len() {
            return Err(Error::InvalidArgument(format!(
                "batch size {size} outside 1..={}",
                self.train.len()
            )));
        }
        let mut idx = self.train.clone();
        shuffle(&mut idx, &mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(size);
        Ok(self.batch(&idx))
    }

    /// Hash over the generated data and split assignment.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}|{}|{}|{}|", self.kind, self.seed, self.classes, self.noise).as_bytes());
        for v in self.inputs.data() {
            h.update(v.to_le_bytes());
        }
        for part in [&self.labels, &self.train, &self.val, &self.test] {
            for &v in part.iter() {
                h.update((v as u64).to_le_bytes());
            }
            h.update(b"/");
        }
        hex16(&h.finalize())
    }
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 0.05, momentum: 0.9, epochs: 60, batch_size: 32, weight_decay: 0.0, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| Err(Error::Config { field: format!("train.{field}"), message: message.into() });
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr", "must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", "must be in [0, 1)");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay", "must be >= 0");
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex16(&Sha256::digest(json.as_bytes()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub train_loss: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedResult {
    pub arch_id: Option<u32>,
    pub train_loss: f64,
    /// Validation accuracy at the best-validation epoch.
    pub val_acc: f64,
    /// Test accuracy at the best-validation epoch.
    pub test_acc: f64,
    /// Simulated training cost, see [`simulated_cost`].
    pub cost_seconds: f64,
    /// Measured wall clock; not persisted.
    #[serde(skip)]
    pub wall_seconds: f64,
    pub curve: Vec<EpochRecord>,
    pub diverged: bool,
}

impl TrainedResult {
    /// Validation accuracy after `epochs` epochs (clamped to the curve).
    pub fn val_acc_at(&self, epochs: usize) -> f64 {
        if self.curve.is_empty() {
            return self.val_acc;
        }
        self.curve[epochs.clamp(1, self.curve.len()) - 1].val_acc
    }

    pub fn test_acc_at(&self, epochs: usize) -> f64 {
        if self.curve.is_empty() {
            return self.test_acc;
        }
        self.curve[epochs.clamp(1, self.curve.len()) - 1].test_acc
    }
}

fn accuracy<M: Model + ?Sized>(model: &M, theta: &[f64], batch: &Batch) -> f64 {
    let graph = model.graph();
    let fwd = forward_pass(graph, theta, batch.inputs().data(), batch.len());
    let out = fwd.output(graph);
    let o = graph.output_dim();
    let Labels::Classes(labels) = batch.labels() else { unreachable!("datasets carry class labels") };
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| {
            let row = &out[i * o..(i + 1) * o];
            let mut best = 0;
            for k in 1..o {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best == y
        })
        .count();
    correct as f64 / labels.len() as f64
}

/// Minibatch SGD with momentum on cross-entropy; reports the test accuracy
/// of the best-validation epoch (earliest on ties).
pub fn train<M: Model + ?Sized>(
    model: &M,
    theta0: &ParamVector,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<TrainedResult> {
    config.validate()?;
    let started = Instant::now();
    let mut theta = theta0.values().to_vec();
    let mut velocity = vec![0.0; theta.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order = dataset.indices(Split::Train).to_vec();
    let val = dataset.split_batch(Split::Val);
    let test = dataset.split_batch(Split::Test);
    let mut curve = Vec::with_capacity(config.epochs);
    let mut best: Option<usize> = None;
    let mut diverged = false;

    'epochs: for _ in 0..config.epochs {
        shuffle(&mut order, &mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = dataset.batch(chunk);
            let (loss, grad) = mean_loss_gradient(model, &theta, &batch, LossKind::CrossEntropy)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                diverged = true;
                break 'epochs;
            }
            loss_sum += loss * chunk.len() as f64;
            for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = config.momentum * *v + g + config.weight_decay * *t;
                *t -= config.lr * *v;
            }
        }
        if theta.iter().any(|t| !t.is_finite()) {
            diverged = true;
            break;
        }
        let record = EpochRecord {
            train_loss: loss_sum / order.len() as f64,
            val_acc: accuracy(model, &theta, &val),
            test_acc: accuracy(model, &theta, &test),
        };
        if best.is_none_or(|b| record.val_acc > curve_val(&curve, b)) {
            best = Some(curve.len());
        }
        curve.push(record);
    }

    let (val_acc, test_acc) = best.map_or((0.0, 0.0), |b| (curve[b].val_acc, curve[b].test_acc));
    Ok(TrainedResult {
        arch_id: model.arch_id(),
        train_loss: curve.last().map_or(f64::NAN, |r: &EpochRecord| r.train_loss),
        val_acc,
        test_acc,
        cost_seconds: simulated_cost(model.param_count(), curve.len().max(1) * order.len()),
        wall_seconds: started.elapsed().as_secs_f64(),
        curve,
        diverged,
    })
}

fn curve_val(curve: &[EpochRecord], i: usize) -> f64 {
    curve[i].val_acc
}

/// Ground-truth accuracies for a set of architectures.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchTable {
    pub dataset_fingerprint: String,
    pub config_fingerprint: String,
    pub space: SearchSpaceSpec,
    entries: BTreeMap<u32, TrainedResult>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BenchSidecar {
    dataset_fingerprint: String,
    config_fingerprint: String,
    space: SearchSpaceSpec,
    entries: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct BenchRow {
    arch_id: u32,
    train_loss: f64,
    val_acc: f64,
    test_acc: f64,
    cost_seconds: f64,
    diverged: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    arch_id: u32,
    epoch: usize,
    train_loss: f64,
    val_acc: f64,
    test_acc: f64,
}

/// Paths of the files that make up a persisted bench rooted at `csv`.
pub fn bench_paths(csv: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (csv.to_path_buf(), csv.with_extension("json"), csv.with_extension("curves.csv"))
}

impl BenchTable {
    pub fn new(dataset_fingerprint: String, config_fingerprint: String, space: SearchSpaceSpec) -> Self {
        Self { dataset_fingerprint, config_fingerprint, space, entries: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, arch_id: u32) -> Option<&TrainedResult> {
        self.entries.get(&arch_id)
    }

    pub fn insert(&mut self, arch_id: u32, mut result: TrainedResult) {
        result.arch_id = Some(arch_id);
        self.entries.insert(arch_id, result);
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &TrainedResult)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    /// Ids of entries that trained without diverging.
    pub fn usable_ids(&self) -> Vec<u32> {
        self.iter().filter(|(_, r)| !r.diverged).map(|(id, _)| id).collect()
    }

    /// Writes the table CSV, a JSON sidecar with fingerprints and a
    /// per-epoch curve CSV next to it.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        let (csv_path, json_path, curve_path) = bench_paths(csv_path);
        if let Some(dir) = csv_path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = csv::Writer::from_path(&csv_path)?;
        let mut cw = csv::Writer::from_path(&curve_path)?;
        for (id, r) in self.iter() {
            w.serialize(row_of(id, r))?;
            for (e, c) in r.curve.iter().enumerate() {
                cw.serialize(CurveRow { arch_id: id, epoch: e + 1, train_loss: c.train_loss, val_acc: c.val_acc, test_acc: c.test_acc })?;
            }
        }
        w.flush()?;
        cw.flush()?;
        self.write_sidecar(&json_path)
    }

    fn write_sidecar(&self, json_path: &Path) -> Result<()> {
        let sidecar = BenchSidecar {
            dataset_fingerprint: self.dataset_fingerprint.clone(),
            config_fingerprint: self.config_fingerprint.clone(),
            space: self.space,
            entries: self.entries.len(),
        };
        fs::write(json_path, serde_json::to_string_pretty(&sidecar)? + "\n")?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let (csv_path, json_path, curve_path) = bench_paths(csv_path);
        let sidecar: BenchSidecar = serde_json::from_str(&fs::read_to_string(&json_path)?)?;
        let mut table = Self::new(sidecar.dataset_fingerprint, sidecar.config_fingerprint, sidecar.space);
        let mut curves: BTreeMap<u32, Vec<EpochRecord>> = BTreeMap::new();
        if curve_path.exists() {
            for row in csv::Reader::from_path(&curve_path)?.deserialize() {
                let row: CurveRow = row?;
                curves.entry(row.arch_id).or_default().push(EpochRecord {
                    train_loss: row.train_loss,
                    val_acc: row.val_acc,
                    test_acc: row.test_acc,
                });
            }
        }
        for row in csv::Reader::from_path(&csv_path)?.deserialize() {
            let row: BenchRow = row?;
            table.entries.insert(
                row.arch_id,
                TrainedResult {
                    arch_id: Some(row.arch_id),
                    train_loss: row.train_loss,
                    val_acc: row.val_acc,
                    test_acc: row.test_acc,
                    cost_seconds: row.cost_seconds,
                    wall_seconds: 0.0,
                    curve: curves.remove(&row.arch_id).unwrap_or_default(),
                    diverged: row.diverged,
                },
            );
        }
        Ok(table)
    }
}

fn row_of(id: u32, r: &TrainedResult) -> BenchRow {
    BenchRow {
        arch_id: id,
        train_loss: r.train_loss,
        val_acc: r.val_acc,
        test_acc: r.test_acc,
        cost_seconds: r.cost_seconds,
        diverged: r.diverged,
    }
}

/// Everything needed to train one architecture of the space.
#[derive(Clone, Debug)]
pub struct BenchSetup<'a> {
    pub space: SearchSpaceSpec,
    pub dataset: &'a Dataset,
    pub config: &'a TrainConfig,
    /// Seed passed to [`init_params`] for every architecture.
    pub init_seed: u64,
}

impl BenchSetup<'_> {
    pub fn train_arch(&self, arch_id: u32) -> Result<TrainedResult> {
        let arch = decode_arch(arch_id as u64)?;
        let exec = materialize(&arch, &self.space, self.dataset.input_dim(), self.dataset.classes);
        let theta0 = init_params(&exec, self.init_seed);
        train(&exec, &theta0, self.dataset, self.config)
    }

    pub(crate) fn empty_table(&self) -> BenchTable {
        BenchTable::new(self.dataset.fingerprint(), self.fingerprint(), self.space)
    }

    fn fingerprint(&self) -> String {
        let json = serde_json::json!({
            "train": self.config,
            "space": self.space,
            "init_seed": self.init_seed,
        });
        hex16(&Sha256::digest(json.to_string().as_bytes()))
    }
}

/// Trains every listed architecture on `workers` threads. When `persist`
/// is given, finished rows are appended to `<persist>.partial` as they
/// complete, an interrupted build resumes from it, and the final table is
/// written sorted by arch id.
pub fn build_bench(
    setup: &BenchSetup<'_>,
    arch_ids: &[u32],
    workers: usize,
    persist: Option<&Path>,
) -> Result<BenchTable> {
    if arch_ids.is_empty() {
        return Err(Error::InvalidArgument("build_bench needs at least one architecture".into()));
    }
    setup.space.validate()?;
    setup.config.validate()?;
    let mut table = setup.empty_table();
    let partial = persist.map(|p| p.with_extension("partial.jsonl"));
    if let Some(path) = &partial {
        if path.exists() {
            for line in fs::read_to_string(path)?.lines().filter(|l| !l.trim().is_empty()) {
                let Ok((fp, result)) = serde_json::from_str::<(String, TrainedResult)>(line) else {
                    continue; // torn final line from an interrupted write
                };
                if fp == table.config_fingerprint {
                    if let Some(id) = result.arch_id {
                        table.insert(id, result);
                    }
                }
            }
        } else if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
    }

    let wanted: BTreeSet<u32> = arch_ids.iter().copied().collect();
    let todo: Vec<u32> = wanted.iter().copied().filter(|id| table.get(*id).is_none()).collect();
    let sink = match &partial {
        Some(p) => Some(Mutex::new(fs::OpenOptions::new().create(true).append(true).open(p)?)),
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let fingerprint = table.config_fingerprint.clone();
    let results: Vec<Result<(u32, TrainedResult)>> = pool.install(|| {
        todo.par_iter()
            .map(|&id| {
                let mut r = setup.train_arch(id)?;
                r.arch_id = Some(id);
                if let Some(sink) = &sink {
                    let line = serde_json::to_string(&(&fingerprint, &r))?;
                    let mut f = sink.lock().expect("sink lock");
                    writeln!(f, "{line}")?;
                }
                Ok((id, r))
            })
            .collect()
    });
    for r in results {
        let (id, result) = r?;
        table.insert(id, result);
    }
    table.entries.retain(|id, _| wanted.contains(id));
    if let Some(path) = persist {
        table.save(path)?;
        if let Some(p) = &partial {
            let _ = fs::remove_file(p);
        }
    }
    Ok(table)
}

/// Seed for the shared `θ0` of bench training, derived from a root seed.
pub fn bench_init_seed(root: u64) -> u64 {
    derive_seed(root, "bench.init")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::decode_arch;
    use crate::tensor::{Activation, NetworkSpec};

    #[test]
    fn dataset_is_deterministic_split_and_balanced() {
        let a = make_synthetic_dataset(DatasetKind::TwoSpirals, 200, 2, 2, 0.1, 4).unwrap();
        let b = make_synthetic_dataset(DatasetKind::TwoSpirals, 200, 2, 2, 0.1, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (140, 30, 30));
        let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
        let c = make_synthetic_dataset(DatasetKind::GaussianBlobs, 103, 3, 3, 0.5, 1).unwrap();
        let counts: Vec<usize> = (0..3).map(|k| c.labels.iter().filter(|&&y| y == k).count()).collect();
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn dataset_rejects_infeasible_sizes() {
        assert!(make_synthetic_dataset(DatasetKind::GaussianBlobs, 29, 2, 3, 0.1, 0).is_err());
        assert!(make_synthetic_dataset(DatasetKind::TwoSpirals, 100, 1, 2, 0.1, 0).is_err());
    }

    #[test]
    fn separable_blobs_train_to_perfect_accuracy() {
        let data = make_synthetic_dataset(DatasetKind::GaussianBlobs, 300, 2, 3, 0.0, 2).unwrap();
        let net = NetworkSpec::mlp(2, &[], 3).unwrap();
        let config = TrainConfig { epochs: 20, ..TrainConfig::default() };
        let r = train(&net, &init_params(&net, 0), &data, &config).unwrap();
        assert_eq!(r.test_acc, 1.0);
        assert!(!r.diverged);
    }

    #[test]
    fn one_epoch_gives_one_curve_point_and_is_reproducible() {
        let data = make_synthetic_dataset(DatasetKind::TwoSpirals, 200, 2, 2, 0.1, 2).unwrap();
        let net = NetworkSpec::mlp(2, &[(8, Activation::Tanh)], 2).unwrap();
        let config = TrainConfig { epochs: 1, ..TrainConfig::default() };
        let a = train(&net, &init_params(&net, 0), &data, &config).unwrap();
        let b = train(&net, &init_params(&net, 0), &data, &config).unwrap();
        assert_eq!(a.curve.len(), 1);
        assert_eq!((a.val_acc, a.test_acc, a.train_loss, &a.curve), (b.val_acc, b.test_acc, b.train_loss, &b.curve));
        let zero = TrainConfig { epochs: 0, ..config };
        assert!(train(&net, &init_params(&net, 0), &data, &zero).is_err());
    }

    #[test]
    fn zero_arch_predicts_at_chance() {
        let data = make_synthetic_dataset(DatasetKind::TwoSpirals, 400, 2, 2, 0.1, 3).unwrap();
        let setup = BenchSetup { space: SearchSpaceSpec::default(), dataset: &data, config: &TrainConfig { epochs: 5, ..TrainConfig::default() }, init_seed: 1 };
        let r = setup.train_arch(decode_arch(0).unwrap().id()).unwrap();
        assert!((r.test_acc - 0.5).abs() <= 0.1, "{}", r.test_acc);
    }

    #[test]
    fn diverging_training_is_flagged() {
        let data = make_synthetic_dataset(DatasetKind::GaussianBlobs, 200, 2, 2, 1.0, 3).unwrap();
        let net = NetworkSpec::mlp(2, &[(8, Activation::Identity), (8, Activation::Identity)], 2).unwrap();
        let config = TrainConfig { lr: 1e6, epochs: 5, momentum: 0.0, ..TrainConfig::default() };
        let r = train(&net, &init_params(&net, 0), &data, &config).unwrap();
        assert!(r.diverged);
    }
}
