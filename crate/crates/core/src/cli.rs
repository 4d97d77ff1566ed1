//! Command-line front end: one subcommand per pipeline stage, CSV/JSON
//! artifacts in the output directory and a manifest per stage.
//!
//! Each stage writes `<stage>.manifest.json` holding the toolkit version,
//! a hash of the config sections the stage depends on, the derived seeds,
//! the full effective config and a SHA-256 of every artifact. A stage whose
//! manifest matches the current config and whose artifacts are intact is
//! reused; otherwise it is recomputed. `--force` recomputes the requested
//! stage. A stage that fails leaves its partial outputs plus
//! `<stage>.failed` holding the error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiment::{Experiment, ExperimentConfig};
use crate::metrics::{MetricKind, MetricScore};
use crate::search::{run_many, SearchSummary, SearchTrace};
use crate::stats::{best_of_n_selection, correlate, write_correlation_csv, CorrelationReport, SelectionReport};
use crate::theory::{run_sweep, write_verify_csv, VerifyRow};
use crate::trainer::{build_bench, BenchTable};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug, Clone)]
#[command(name = "gradsign", version, about = "Zero-cost architecture scoring, benches, assisted search and theory checks")]
pub struct Cli {
    /// Experiment config (TOML); defaults apply to anything omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `out` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    /// Recompute the requested stage even if its outputs are current.
    #[arg(long, global = true)]
    pub force: bool,
    /// Root seed, overriding `seed` in the config.
    #[arg(long, global = true, value_name = "SEED")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Train every bench architecture: bench.csv, bench.json, bench.curves.csv.
    Bench {
        #[arg(value_enum)]
        action: Option<BenchAction>,
    },
    /// Score every bench architecture with each configured metric: scores.csv.
    Score,
    /// Spearman and Kendall correlation of scores with test accuracy: correlation.csv.
    Correlate {
        /// Restrict to these metrics (repeatable).
        #[arg(long, value_name = "NAME")]
        metric: Vec<MetricKind>,
    },
    /// Best-of-N selection by metric vs random and optimal picks: selection.csv.
    Select {
        #[arg(long, value_name = "NAME")]
        metric: Vec<MetricKind>,
    },
    /// Plain and score-assisted architecture search: search_traces.csv, search_summary.{csv,json}.
    Search,
    /// Training and generalization bound sweep: verify.csv, verify_planted.csv.
    Verify {
        /// Number of random instances, overriding `verify.instances`.
        #[arg(long, value_name = "N")]
        instances: Option<usize>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchAction {
    Build,
}

impl Command {
    pub fn stage(&self) -> &'static str {
        match self {
            Command::Bench { .. } => "bench",
            Command::Score => "score",
            Command::Correlate { .. } => "correlate",
            Command::Select { .. } => "select",
            Command::Search => "search",
            Command::Verify { .. } => "verify",
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            EXIT_OK
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Loads the config named by `cli` with flag overrides applied.
pub fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config { field: "--config".into(), message: format!("{}: {e}", path.display()) })?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Command::Verify { instances: Some(n) } = cli.command {
        config.verify.instances = n;
    }
    if config.verify.instances == 0 {
        return Err(Error::Config { field: "verify.instances".into(), message: "must be >= 1".into() });
    }
    if cli.workers == Some(0) {
        return Err(Error::Config { field: "--workers".into(), message: "must be >= 1".into() });
    }
    Ok(config)
}

/// Runs the command; returns human-readable status lines.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let config = effective_config(cli)?;
    let filter = match &cli.command {
        Command::Correlate { metric } | Command::Select { metric } => metric.clone(),
        _ => Vec::new(),
    };
    if let Some(m) = filter.iter().find(|m| !config.metrics.names.contains(m)) {
        return Err(Error::Config { field: "--metric".into(), message: format!("`{m}` is not listed in metrics.names") });
    }
    let exp = Experiment::new(config)?;
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let mut pipeline = Pipeline { exp: &exp, out: exp.config.out.clone(), workers, log: Vec::new() };
    fs::create_dir_all(&pipeline.out)?;
    let stage = cli.command.stage();
    pool.install(|| match &cli.command {
        Command::Bench { .. } => pipeline.bench(cli.force).map(drop),
        Command::Score => pipeline.scores(cli.force).map(drop),
        Command::Correlate { .. } => pipeline.correlate(&filter, cli.force).map(drop),
        Command::Select { .. } => pipeline.select(&filter, cli.force).map(drop),
        Command::Search => pipeline.search(cli.force).map(drop),
        Command::Verify { .. } => pipeline.verify(cli.force).map(drop),
    })?;
    pipeline.log.push(format!("{stage}: done, outputs in {}", pipeline.out.display()));
    Ok(pipeline.log)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

/// What a stage records next to its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub config_hash: String,
    pub root_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub args: Value,
    /// The effective config as TOML.
    pub config: String,
    pub artifacts: Vec<ArtifactEntry>,
}

pub fn manifest_path(out: &Path, stage: &str) -> PathBuf {
    out.join(format!("{stage}.manifest.json"))
}

pub fn failure_marker(out: &Path, stage: &str) -> PathBuf {
    out.join(format!("{stage}.failed"))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn artifact_entry(out: &Path, file: &str) -> Result<ArtifactEntry> {
    let bytes = fs::read(out.join(file))?;
    Ok(ArtifactEntry { file: file.to_string(), sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
}

#[derive(Serialize, Deserialize)]
struct ScoreRow {
    arch_id: u32,
    metric: MetricKind,
    value: Option<f64>,
    regularized: bool,
    error: String,
}

#[derive(Serialize)]
struct SummaryRow {
    algorithm: &'static str,
    assisted: bool,
    runs: usize,
    val_mean: f64,
    val_std: f64,
    test_mean: f64,
    test_std: f64,
    mean_evaluations: f64,
}

struct Pipeline<'e> {
    exp: &'e Experiment,
    out: PathBuf,
    workers: usize,
    log: Vec<String>,
}

impl Pipeline<'_> {
    fn key(&self, stage: &str) -> Value {
        let c = &self.exp.config;
        match stage {
            "bench" => json!({"seed": c.seed, "dataset": c.dataset, "space": c.space, "train": c.train, "bench": c.bench}),
            "score" => json!({"seed": c.seed, "dataset": c.dataset, "space": c.space, "bench": c.bench, "metrics": c.metrics}),
            "verify" => json!({"seed": c.seed, "verify": c.verify}),
            "correlate" => json!({"bench": self.key("bench"), "score": self.key("score")}),
            "select" => json!({"bench": self.key("bench"), "score": self.key("score"), "select": c.select}),
            "search" => json!({"bench": self.key("bench"), "metrics": c.metrics, "search": c.search}),
            other => unreachable!("unknown stage {other}"),
        }
    }

    fn hash(&self, stage: &str, args: &Value) -> String {
        let doc = json!({"stage": stage, "version": VERSION, "key": self.key(stage), "args": args});
        sha256_hex(doc.to_string().as_bytes())
    }

    fn is_current(&self, stage: &str, hash: &str) -> bool {
        let Ok(text) = fs::read_to_string(manifest_path(&self.out, stage)) else {
            return false;
        };
        let Ok(m) = serde_json::from_str::<Manifest>(&text) else {
            return false;
        };
        m.config_hash == hash
            && m.artifacts.iter().all(|a| artifact_entry(&self.out, &a.file).is_ok_and(|now| now == *a))
    }

    /// Runs `body` unless the stage is current, then writes its manifest.
    /// `body` returns the artifact file names it wrote.
    fn stage(&mut self, stage: &str, args: Value, force: bool, body: impl FnOnce(&mut Self) -> Result<Vec<String>>) -> Result<()> {
        let hash = self.hash(stage, &args);
        if !force && self.is_current(stage, &hash) {
            self.log.push(format!("{stage}: up to date"));
            return Ok(());
        }
        let marker = failure_marker(&self.out, stage);
        let _ = fs::remove_file(&marker);
        let files = match body(self) {
            Ok(files) => files,
            Err(e) => {
                fs::write(&marker, format!("{e}\n"))?;
                return Err(e);
            }
        };
        let c = &self.exp.config;
        let manifest = Manifest {
            stage: stage.to_string(),
            version: VERSION.to_string(),
            config_hash: hash,
            root_seed: c.seed,
            seeds: c.seeds().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            args,
            config: c.to_toml(),
            artifacts: files.iter().map(|f| artifact_entry(&self.out, f)).collect::<Result<_>>()?,
        };
        fs::write(manifest_path(&self.out, stage), serde_json::to_string_pretty(&manifest)? + "\n")?;
        self.log.push(format!("{stage}: wrote {}", files.join(", ")));
        Ok(())
    }

    fn bench(&mut self, force: bool) -> Result<BenchTable> {
        let csv = self.out.join("bench.csv");
        self.stage("bench", json!({}), force, |p| {
            build_bench(&p.exp.bench_setup(), &p.exp.bench_ids(), p.workers, Some(&csv))?;
            Ok(vec!["bench.csv".into(), "bench.json".into(), "bench.curves.csv".into()])
        })?;
        BenchTable::load(&csv)
    }

    fn scores(&mut self, force: bool) -> Result<BTreeMap<MetricKind, Vec<MetricScore>>> {
        let path = self.out.join("scores.csv");
        self.stage("score", json!({}), force, |p| {
            let ids = p.exp.bench_ids();
            let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(&path)?));
            for &metric in &p.exp.config.metrics.names {
                for (id, r) in p.exp.score_ids(metric, &ids)? {
                    let row = match r {
                        Ok(s) => ScoreRow { arch_id: id, metric, value: Some(s.value), regularized: s.regularized, error: String::new() },
                        Err(e) => ScoreRow { arch_id: id, metric, value: None, regularized: false, error: e.to_string() },
                    };
                    w.serialize(row)?;
                }
            }
            w.flush()?;
            Ok(vec!["scores.csv".into()])
        })?;
        let seed = self.exp.config.seeds()["metrics.init"];
        let batch_size = self.exp.config.metrics.batch_size;
        let mut by_metric: BTreeMap<MetricKind, Vec<MetricScore>> = BTreeMap::new();
        for row in csv::Reader::from_path(&path)?.deserialize() {
            let row: ScoreRow = row?;
            let entry = by_metric.entry(row.metric).or_default();
            if let Some(value) = row.value {
                entry.push(MetricScore {
                    metric: row.metric,
                    value,
                    arch_id: Some(row.arch_id),
                    seed: Some(seed),
                    batch_size,
                    regularized: row.regularized,
                });
            }
        }
        Ok(by_metric)
    }

    fn selected_metrics(&self, filter: &[MetricKind]) -> Vec<MetricKind> {
        let names = &self.exp.config.metrics.names;
        if filter.is_empty() {
            names.clone()
        } else {
            names.iter().copied().filter(|m| filter.contains(m)).collect()
        }
    }

    fn correlate(&mut self, filter: &[MetricKind], force: bool) -> Result<Vec<CorrelationReport>> {
        let bench = self.bench(false)?;
        let scores = self.scores(false)?;
        let metrics = self.selected_metrics(filter);
        let path = self.out.join("correlation.csv");
        self.stage("correlate", json!({"metrics": metrics}), force, |_| {
            let reports = metrics
                .iter()
                .map(|m| correlate(&bench, scores.get(m).map_or(&[][..], |v| v.as_slice())).map(|mut r| {
                    r.metric = m.name().to_string();
                    r
                }))
                .collect::<Result<Vec<_>>>()?;
            write_correlation_csv(BufWriter::new(fs::File::create(&path)?), &reports)?;
            Ok(vec!["correlation.csv".into()])
        })?;
        let mut reports = Vec::new();
        for r in csv::Reader::from_path(&path)?.deserialize() {
            reports.push(r?);
        }
        Ok(reports)
    }

    fn select(&mut self, filter: &[MetricKind], force: bool) -> Result<()> {
        let bench = self.bench(false)?;
        let scores = self.scores(false)?;
        let metrics = self.selected_metrics(filter);
        let path = self.out.join("selection.csv");
        let (n, runs, seed) = (self.exp.config.select.n, self.exp.config.select.runs, self.exp.config.seeds()["select"]);
        self.stage("select", json!({"metrics": metrics}), force, |_| {
            let reports = metrics
                .iter()
                .map(|m| {
                    let map: BTreeMap<u32, f64> =
                        scores.get(m).into_iter().flatten().filter_map(|s| Some((s.arch_id?, s.value))).collect();
                    best_of_n_selection(m.name(), &map, &bench, n, runs, seed)
                })
                .collect::<Result<Vec<SelectionReport>>>()?;
            SelectionReport::write_csv(&reports, BufWriter::new(fs::File::create(&path)?))?;
            Ok(vec!["selection.csv".into()])
        })
    }

    fn search(&mut self, force: bool) -> Result<()> {
        let bench = self.bench(false)?;
        self.stage("search", json!({}), force, |p| {
            let exp = p.exp;
            let cache_path = p.out.join("search_cache.csv");
            let mut known = bench.clone();
            if let Ok(cache) = BenchTable::load(&cache_path) {
                if cache.dataset_fingerprint == bench.dataset_fingerprint && cache.config_fingerprint == bench.config_fingerprint {
                    for (id, r) in cache.iter() {
                        known.insert(id, r.clone());
                    }
                }
            }
            let eval = exp.search_evaluator(Some(&known))?;
            let s = &exp.config.search;
            let root = exp.config.seeds()["search"];
            let mut traces = csv::Writer::from_writer(BufWriter::new(fs::File::create(p.out.join("search_traces.csv"))?));
            traces.write_record(["algorithm", "assisted", "run", "seed"].into_iter().chain(SearchTrace::COLUMNS))?;
            let mut summaries = Vec::new();
            for &alg in &s.algorithms {
                for &assisted in &s.assisted {
                    let runs = run_many(&eval, alg, assisted, &s.params, s.runs, root);
                    // keep whatever was trained even if a run failed
                    eval.snapshot().save(&cache_path)?;
                    let runs = runs?;
                    for (i, t) in runs.iter().enumerate() {
                        for rec in t.records() {
                            let head = [alg.name().to_string(), assisted.to_string(), i.to_string(), t.seed.to_string()];
                            traces.write_record(head.into_iter().chain(rec))?;
                        }
                    }
                    summaries.push(SearchSummary::of(&runs)?);
                }
            }
            traces.flush()?;
            let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(p.out.join("search_summary.csv"))?));
            for sm in &summaries {
                w.serialize(SummaryRow {
                    algorithm: sm.algorithm.name(),
                    assisted: sm.assisted,
                    runs: sm.runs,
                    val_mean: sm.val.mean,
                    val_std: sm.val.std,
                    test_mean: sm.test.mean,
                    test_std: sm.test.std,
                    mean_evaluations: sm.mean_evaluations,
                })?;
            }
            w.flush()?;
            fs::write(p.out.join("search_summary.json"), serde_json::to_string_pretty(&summaries)? + "\n")?;
            Ok(vec!["search_traces.csv".into(), "search_summary.csv".into(), "search_summary.json".into()])
        })
    }

    fn verify(&mut self, force: bool) -> Result<()> {
        self.stage("verify", json!({}), force, |p| {
            let v = &p.exp.config.verify;
            let root = p.exp.config.seeds()["verify"];
            let rows = run_sweep(root, v.instances, false, &v.check)?;
            write_verify_csv(BufWriter::new(fs::File::create(p.out.join("verify.csv"))?), &rows)?;
            p.log.push(sweep_line("verify", &rows));
            let mut files = vec!["verify.csv".to_string()];
            if v.planted > 0 {
                let planted = run_sweep(root, v.planted, true, &v.check)?;
                write_verify_csv(BufWriter::new(fs::File::create(p.out.join("verify_planted.csv"))?), &planted)?;
                p.log.push(sweep_line("verify (planted)", &planted));
                files.push("verify_planted.csv".into());
            }
            Ok(files)
        })
    }
}

fn sweep_line(label: &str, rows: &[VerifyRow]) -> String {
    let converged: Vec<&VerifyRow> = rows.iter().filter(|r| r.converged).collect();
    let holds = converged.iter().filter(|r| r.holds_n3).count();
    let pop = converged.iter().filter(|r| r.pop_holds).count();
    format!(
        "{label}: {} instances, {} converged, training bound holds on {holds}, population bound on {pop}",
        rows.len(),
        converged.len()
    )
}
