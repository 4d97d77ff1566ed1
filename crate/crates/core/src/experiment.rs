//! Experiment configuration and the pipelines behind each CLI subcommand.
//!
//! Every random stream is derived from the single root `seed` with
//! [`derive_seed`] and a purpose label:
//!
//! | label            | used for                                  |
//! |------------------|-------------------------------------------|
//! | `dataset`        | synthetic dataset generation and split    |
//! | `bench.archs`    | which architectures enter the bench       |
//! | `bench.init`     | initialization of every trained arch      |
//! | `train.shuffle`  | minibatch order during training           |
//! | `metrics.batch`  | the shared scoring batch                  |
//! | `metrics.init`   | the shared scoring initialization         |
//! | `select`         | best-of-N draws                           |
//! | `search`         | per-run search seeds                      |
//! | `verify`         | theory instances                          |

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{decode_arch, CellArch, SearchSpaceSpec, SPACE_SIZE};
use crate::error::{Error, Result};
use crate::metrics::{MetricKind, MetricScore, MetricSpec, Scorer};
use crate::search::{Algorithm, LiveEvaluator, SearchParams};
use crate::seed::derive_seed;
use crate::tensor::LossKind;
use crate::theory::VerifyConfig;
use crate::trainer::{bench_init_seed, make_synthetic_dataset, BenchSetup, BenchTable, Dataset, DatasetKind, Split, TrainConfig};

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), message: message.into() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub n: usize,
    pub dim: usize,
    pub classes: usize,
    pub noise: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { kind: DatasetKind::TwoSpirals, n: 2000, dim: 2, classes: 2, noise: 0.1 }
    }
}

/// Optimizer settings; the shuffle seed comes from the root seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self { lr: d.lr, momentum: d.momentum, epochs: d.epochs, batch_size: d.batch_size, weight_decay: d.weight_decay }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    /// Number of distinct architectures drawn uniformly from the space.
    pub archs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { archs: 400 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub names: Vec<MetricKind>,
    pub batch_size: usize,
    pub zero_tol: f64,
    pub inits: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { names: MetricKind::ALL.to_vec(), batch_size: 64, zero_tol: 0.0, inits: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectConfig {
    pub n: usize,
    pub runs: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self { n: 50, runs: 500 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub algorithms: Vec<Algorithm>,
    pub assisted: Vec<bool>,
    pub runs: usize,
    pub params: SearchParams,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { algorithms: Algorithm::ALL.to_vec(), assisted: vec![false, true], runs: 50, params: SearchParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub instances: usize,
    pub planted: usize,
    pub check: VerifyConfig,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self { instances: 200, planted: 20, check: VerifyConfig::default() }
    }
}

/// Everything an experiment needs; TOML on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub dataset: DatasetConfig,
    pub space: SearchSpaceSpec,
    pub train: TrainSection,
    pub bench: BenchConfig,
    pub metrics: MetricsConfig,
    pub select: SelectConfig,
    pub search: SearchConfig,
    pub verify: VerifySection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs/default"),
            dataset: DatasetConfig::default(),
            space: SearchSpaceSpec::default(),
            train: TrainSection::default(),
            bench: BenchConfig::default(),
            metrics: MetricsConfig::default(),
            select: SelectConfig::default(),
            search: SearchConfig::default(),
            verify: VerifySection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err("config file", e.to_string().trim_end()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lr: t.lr,
            momentum: t.momentum,
            epochs: t.epochs,
            batch_size: t.batch_size,
            weight_decay: t.weight_decay,
            seed: derive_seed(self.seed, "train.shuffle"),
        }
    }

    /// Field-level validation of everything that can be checked without
    /// building the dataset.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.classes < 2 {
            return Err(config_err("dataset.classes", "need at least 2 classes"));
        }
        if d.dim < 2 && d.kind == DatasetKind::TwoSpirals {
            return Err(config_err("dataset.dim", "two_spirals needs dim >= 2"));
        }
        if d.dim == 0 {
            return Err(config_err("dataset.dim", "must be >= 1"));
        }
        if d.n < d.classes * 10 {
            return Err(config_err("dataset.n", format!("need at least {} samples for {} classes", d.classes * 10, d.classes)));
        }
        if !(d.noise >= 0.0 && d.noise.is_finite()) {
            return Err(config_err("dataset.noise", "must be a finite value >= 0"));
        }
        self.space.validate()?;
        self.train_config().validate()?;
        if self.bench.archs == 0 || self.bench.archs > SPACE_SIZE as usize {
            return Err(config_err("bench.archs", format!("must lie in 1..={SPACE_SIZE}")));
        }
        let m = &self.metrics;
        if m.names.is_empty() {
            return Err(config_err("metrics.names", "list at least one metric"));
        }
        if m.batch_size < 2 {
            return Err(config_err("metrics.batch_size", "must be >= 2"));
        }
        if !(m.zero_tol >= 0.0) {
            return Err(config_err("metrics.zero_tol", "must be >= 0"));
        }
        if m.inits == 0 {
            return Err(config_err("metrics.inits", "must be >= 1"));
        }
        if self.select.n == 0 || self.select.n > self.bench.archs {
            return Err(config_err("select.n", format!("must lie in 1..={} (bench.archs)", self.bench.archs)));
        }
        if self.select.runs == 0 {
            return Err(config_err("select.runs", "must be >= 1"));
        }
        let s = &self.search;
        if s.algorithms.is_empty() {
            return Err(config_err("search.algorithms", "list at least one algorithm"));
        }
        if s.assisted.is_empty() {
            return Err(config_err("search.assisted", "list at least one of false/true"));
        }
        if s.runs == 0 {
            return Err(config_err("search.runs", "must be >= 1"));
        }
        let p = &s.params;
        if !(p.budget > 0.0 && p.budget.is_finite()) {
            return Err(config_err("search.params.budget", "must be > 0"));
        }
        if p.pool_size == 0 {
            return Err(config_err("search.params.pool_size", "must be >= 1"));
        }
        if p.sample_size == 0 || p.population_size < p.sample_size {
            return Err(config_err("search.params.sample_size", "need population_size >= sample_size >= 1"));
        }
        if !(p.lr >= 0.0) {
            return Err(config_err("search.params.lr", "must be >= 0"));
        }
        if !(0.0..1.0).contains(&p.baseline_decay) {
            return Err(config_err("search.params.baseline_decay", "must lie in [0, 1)"));
        }
        if p.eta < 2 {
            return Err(config_err("search.params.eta", "must be >= 2"));
        }
        if p.b_min == 0 || p.b_min > p.b_max {
            return Err(config_err("search.params.b_min", "need 1 <= b_min <= b_max"));
        }
        if p.b_max > self.train.epochs {
            return Err(config_err("search.params.b_max", format!("must not exceed train.epochs ({})", self.train.epochs)));
        }
        let v = &self.verify.check;
        if !(v.descent.lr > 0.0) {
            return Err(config_err("verify.check.descent.lr", "must be > 0"));
        }
        if !(v.descent.tol > 0.0) {
            return Err(config_err("verify.check.descent.tol", "must be > 0"));
        }
        if v.smoothness_probes == 0 {
            return Err(config_err("verify.check.smoothness_probes", "must be >= 1"));
        }
        if !(v.delta > 0.0 && v.delta < 1.0) {
            return Err(config_err("verify.check.delta", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Every derived seed, by label.
    pub fn seeds(&self) -> BTreeMap<&'static str, u64> {
        let r = self.seed;
        BTreeMap::from([
            ("dataset", derive_seed(r, "dataset")),
            ("bench.archs", derive_seed(r, "bench.archs")),
            ("bench.init", bench_init_seed(r)),
            ("train.shuffle", derive_seed(r, "train.shuffle")),
            ("metrics.batch", derive_seed(r, "metrics.batch")),
            ("metrics.init", derive_seed(r, "metrics.init")),
            ("select", derive_seed(r, "select")),
            ("search", derive_seed(r, "search")),
            ("verify", derive_seed(r, "verify")),
        ])
    }
}

/// A validated config with its dataset materialized.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    train: TrainConfig,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let d = &config.dataset;
        let dataset = make_synthetic_dataset(d.kind, d.n, d.dim, d.classes, d.noise, derive_seed(config.seed, "dataset"))
            .map_err(|e| config_err("dataset", e.to_string()))?;
        let train_size = dataset.indices(Split::Train).len();
        if config.metrics.batch_size > train_size {
            return Err(config_err("metrics.batch_size", format!("must not exceed the {train_size} training samples")));
        }
        let train = config.train_config();
        Ok(Self { config, dataset, train })
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train
    }

    /// Distinct architecture ids of the bench, in ascending order.
    pub fn bench_ids(&self) -> Vec<u32> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, "bench.archs"));
        let mut ids: Vec<u32> =
            sample(&mut rng, SPACE_SIZE as usize, self.config.bench.archs).into_iter().map(|i| i as u32).collect();
        ids.sort_unstable();
        ids
    }

    pub fn bench_setup(&self) -> BenchSetup<'_> {
        BenchSetup {
            space: self.config.space,
            dataset: &self.dataset,
            config: &self.train,
            init_seed: bench_init_seed(self.config.seed),
        }
    }

    pub fn scorer(&self, metric: MetricKind) -> Result<Scorer> {
        let m = &self.config.metrics;
        Ok(Scorer {
            spec: MetricSpec { metric, loss: LossKind::CrossEntropy, zero_tol: m.zero_tol, inits: m.inits },
            space: self.config.space,
            num_classes: self.dataset.classes,
            batch: self.dataset.scoring_batch(m.batch_size, derive_seed(self.config.seed, "metrics.batch"))?,
            seed: derive_seed(self.config.seed, "metrics.init"),
        })
    }

    /// Scores of `metric` for each id, in id order; failures stay in place.
    pub fn score_ids(&self, metric: MetricKind, ids: &[u32]) -> Result<Vec<(u32, Result<MetricScore>)>> {
        let scorer = self.scorer(metric)?;
        let archs: Vec<CellArch> = ids.iter().map(|&id| decode_arch(id as u64)).collect::<Result<_>>()?;
        Ok(ids.iter().copied().zip(scorer.score_pool(&archs, true)).collect())
    }

    /// Evaluator for searches: the bench plus on-demand training, scored
    /// with GradSign.
    pub fn search_evaluator(&self, bench: Option<&BenchTable>) -> Result<LiveEvaluator<'_>> {
        Ok(LiveEvaluator::new(self.bench_setup(), bench, Some(self.scorer(MetricKind::GradSign)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 7\n[bench]\narchs = 20\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.bench.archs, 20);
        assert_eq!(cfg.train, TrainSection::default());
    }

    #[test]
    fn field_level_errors() {
        let unknown = ExperimentConfig::from_toml("[bench]\nsize = 3\n").unwrap_err();
        assert!(unknown.to_string().contains("size"), "{unknown}");
        let bad_metric = ExperimentConfig::from_toml("[metrics]\nnames = [\"zen\"]\n").unwrap_err();
        assert!(matches!(bad_metric, Error::Config { .. }));
        let mut cfg = ExperimentConfig::default();
        cfg.search.params.b_max = 100;
        match cfg.validate().unwrap_err() {
            Error::Config { field, .. } => assert_eq!(field, "search.params.b_max"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bench_ids_are_distinct_and_seeded() {
        let mut cfg = ExperimentConfig::default();
        cfg.bench.archs = 50;
        cfg.select.n = 10;
        let e = Experiment::new(cfg.clone()).unwrap();
        let ids = e.bench_ids();
        assert_eq!(ids.len(), 50);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(Experiment::new(cfg).unwrap().bench_ids(), ids);
    }
}
