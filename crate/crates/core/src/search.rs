//! Random search, regularized evolution, REINFORCE and Hyperband, each with
//! an optional GradSign-assisted proposal step: draw a pool of candidates,
//! score them with the zero-cost metric, and spend an accuracy evaluation
//! only on the best-scoring one.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{mutate_arch, random_arch, CellArch, NUM_EDGES, NUM_OPS};
use crate::error::{Error, Result};
use crate::metrics::Scorer;
use crate::seed::derive_seed;
use crate::stats::Summary;
use crate::tensor::unit_f64;
use crate::trainer::{BenchSetup, BenchTable, TrainedResult};

/// Accuracy of one architecture at some training budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub val_acc: f64,
    pub test_acc: f64,
    pub cost: f64,
}

/// Source of accuracies and zero-cost scores for the search loops.
pub trait Evaluator: Sync {
    /// Training epochs of a full evaluation.
    fn max_epochs(&self) -> usize;

    /// Accuracy after `epochs` epochs; `epochs >= max_epochs()` is a full
    /// evaluation.
    fn evaluate(&self, arch: &CellArch, epochs: usize) -> Result<Evaluation>;

    /// Zero-cost score and its cost.
    fn score(&self, arch: &CellArch) -> Result<(f64, f64)>;
}

fn evaluation_from(r: &TrainedResult, epochs: usize, max_epochs: usize) -> Evaluation {
    if epochs >= max_epochs {
        Evaluation { val_acc: r.val_acc, test_acc: r.test_acc, cost: r.cost_seconds }
    } else {
        Evaluation {
            val_acc: r.val_acc_at(epochs),
            test_acc: r.test_acc_at(epochs),
            cost: r.cost_seconds * epochs as f64 / max_epochs as f64,
        }
    }
}

/// Looks accuracies up in a [`BenchTable`], training any architecture the
/// table lacks on first use. Training is deterministic per architecture,
/// so results do not depend on the order in which runs reach an arch.
pub struct LiveEvaluator<'a> {
    setup: BenchSetup<'a>,
    scorer: Option<Scorer>,
    cache: Mutex<BTreeMap<u32, TrainedResult>>,
}

impl<'a> LiveEvaluator<'a> {
    pub fn new(setup: BenchSetup<'a>, table: Option<&BenchTable>, scorer: Option<Scorer>) -> Self {
        let cache = table.map(|t| t.iter().map(|(id, r)| (id, r.clone())).collect()).unwrap_or_default();
        Self { setup, scorer, cache: Mutex::new(cache) }
    }

    fn result(&self, id: u32) -> Result<TrainedResult> {
        if let Some(r) = self.cache.lock().expect("cache lock").get(&id) {
            return Ok(r.clone());
        }
        let r = self.setup.train_arch(id)?;
        self.cache.lock().expect("cache lock").insert(id, r.clone());
        Ok(r)
    }

    /// Number of architectures trained or loaded so far.
    pub fn known(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    /// Everything trained or loaded so far, as a bench table that can be
    /// saved and passed back to [`LiveEvaluator::new`] later.
    pub fn snapshot(&self) -> BenchTable {
        let mut table = self.setup.empty_table();
        for (id, r) in self.cache.lock().expect("cache lock").iter() {
            table.insert(*id, r.clone());
        }
        table
    }
}

impl Evaluator for LiveEvaluator<'_> {
    fn max_epochs(&self) -> usize {
        self.setup.config.epochs
    }

    fn evaluate(&self, arch: &CellArch, epochs: usize) -> Result<Evaluation> {
        Ok(evaluation_from(&self.result(arch.id())?, epochs, self.max_epochs()))
    }

    fn score(&self, arch: &CellArch) -> Result<(f64, f64)> {
        let scorer = self.scorer.as_ref().ok_or_else(|| Error::InvalidArgument("evaluator has no scorer".into()))?;
        Ok((scorer.score(arch)?.value, scorer.cost(arch)))
    }
}

/// Pure table lookup; architectures missing from the table are an error.
pub struct BenchEvaluator<'a> {
    pub table: &'a BenchTable,
    pub epochs: usize,
    pub scorer: Option<Scorer>,
}

impl Evaluator for BenchEvaluator<'_> {
    fn max_epochs(&self) -> usize {
        self.epochs
    }

    fn evaluate(&self, arch: &CellArch, epochs: usize) -> Result<Evaluation> {
        let r = self
            .table
            .get(arch.id())
            .ok_or_else(|| Error::InvalidArgument(format!("arch {} is not in the bench", arch.id())))?;
        Ok(evaluation_from(r, epochs, self.epochs))
    }

    fn score(&self, arch: &CellArch) -> Result<(f64, f64)> {
        let scorer = self.scorer.as_ref().ok_or_else(|| Error::InvalidArgument("evaluator has no scorer".into()))?;
        Ok((scorer.score(arch)?.value, scorer.cost(arch)))
    }
}

/// Synthetic landscape where both accuracy and score equal the fraction of
/// edges carrying `op`. Partial budgets see the same value.
#[derive(Clone, Copy, Debug)]
pub struct PlantedEvaluator {
    pub op: usize,
    pub eval_cost: f64,
    pub score_cost: f64,
}

impl Default for PlantedEvaluator {
    fn default() -> Self {
        Self { op: NUM_OPS - 1, eval_cost: 1.0, score_cost: 0.0 }
    }
}

impl PlantedEvaluator {
    pub fn fitness(&self, arch: &CellArch) -> f64 {
        arch.op_indices().iter().filter(|&&o| o == self.op).count() as f64 / NUM_EDGES as f64
    }
}

impl Evaluator for PlantedEvaluator {
    fn max_epochs(&self) -> usize {
        1
    }

    fn evaluate(&self, arch: &CellArch, epochs: usize) -> Result<Evaluation> {
        let f = self.fitness(arch);
        let frac = (epochs.max(1) as f64).min(1.0);
        Ok(Evaluation { val_acc: f, test_acc: f, cost: self.eval_cost * frac })
    }

    fn score(&self, arch: &CellArch) -> Result<(f64, f64)> {
        Ok((self.fitness(arch), self.score_cost))
    }
}

/// Simulated-seconds budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub total: f64,
    pub consumed: f64,
}

impl Budget {
    pub fn new(total: f64) -> Result<Self> {
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidArgument(format!("budget must be > 0, got {total}")));
        }
        Ok(Self { total, consumed: 0.0 })
    }

    pub fn exhausted(&self) -> bool {
        self.consumed >= self.total
    }

    pub fn remaining(&self) -> f64 {
        (self.total - self.consumed).max(0.0)
    }

    fn charge(&mut self, cost: f64) {
        self.consumed += cost;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Drawn from the REINFORCE policy; the value is its log-probability.
    Sampled,
    /// Zero-cost score computed.
    Scored,
    /// Accuracy at full training budget.
    Evaluated,
    /// Accuracy at a reduced Hyperband budget.
    Partial,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Sampled => "sampled",
            Action::Scored => "scored",
            Action::Evaluated => "evaluated",
            Action::Partial => "partial",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: usize,
    pub action: Action,
    pub arch_id: u32,
    pub value: f64,
    pub cum_budget: f64,
    /// REA parent of an evaluated child.
    pub parent: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Rs,
    Rea,
    Reinforce,
    Hb,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Rs, Algorithm::Rea, Algorithm::Reinforce, Algorithm::Hb];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rs => "rs",
            Algorithm::Rea => "rea",
            Algorithm::Reinforce => "reinforce",
            Algorithm::Hb => "hb",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown search algorithm `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub algorithm: Algorithm,
    pub assisted: bool,
    pub seed: u64,
    pub events: Vec<TraceEvent>,
    pub budget: Budget,
    /// Best fully evaluated arch by validation accuracy (first on ties).
    pub final_arch: Option<u32>,
    pub final_val: f64,
    pub final_test: f64,
    /// REA ran out of budget before filling its initial population.
    pub partial_population: bool,
    pub score_computations: usize,
    pub cache_hits: usize,
}

impl SearchTrace {
    fn new(algorithm: Algorithm, assisted: bool, seed: u64, budget: Budget) -> Self {
        Self {
            algorithm,
            assisted,
            seed,
            events: Vec::new(),
            budget,
            final_arch: None,
            final_val: f64::NAN,
            final_test: f64::NAN,
            partial_population: false,
            score_computations: 0,
            cache_hits: 0,
        }
    }

    /// `(event index, arch id)` of the best fully evaluated arch after each
    /// full evaluation.
    pub fn best_by_val(&self) -> Vec<(usize, u32)> {
        let mut best: Option<(u32, f64)> = None;
        let mut out = Vec::new();
        for (i, e) in self.events.iter().enumerate() {
            if e.action == Action::Evaluated {
                if best.is_none_or(|(_, v)| e.value > v) {
                    best = Some((e.arch_id, e.value));
                }
                out.push((i, best.expect("set above").0));
            }
        }
        out
    }

    pub fn evaluations(&self) -> usize {
        self.events.iter().filter(|e| e.action == Action::Evaluated).count()
    }

    /// Column names of [`SearchTrace::records`].
    pub const COLUMNS: [&'static str; 6] = ["step", "action", "arch_id", "value", "cum_budget", "parent"];

    /// One CSV record per event.
    pub fn records(&self) -> impl Iterator<Item = [String; 6]> + '_ {
        self.events.iter().map(|e| {
            [
                e.step.to_string(),
                e.action.name().to_string(),
                e.arch_id.to_string(),
                e.value.to_string(),
                e.cum_budget.to_string(),
                e.parent.map(|p| p.to_string()).unwrap_or_default(),
            ]
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::COLUMNS)?;
        for r in self.records() {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shared bookkeeping for one search run.
struct Run<'e, E: Evaluator + ?Sized> {
    eval: &'e E,
    trace: SearchTrace,
    rng: ChaCha8Rng,
    step: usize,
    best: Option<(u32, Evaluation)>,
    cache: HashMap<u32, f64>,
}

impl<'e, E: Evaluator + ?Sized> Run<'e, E> {
    fn new(eval: &'e E, algorithm: Algorithm, assisted: bool, budget: f64, seed: u64) -> Result<Self> {
        let budget = Budget::new(budget)?;
        Ok(Self {
            eval,
            trace: SearchTrace::new(algorithm, assisted, seed, budget),
            rng: ChaCha8Rng::seed_from_u64(seed),
            step: 0,
            best: None,
            cache: HashMap::new(),
        })
    }

    fn exhausted(&self) -> bool {
        self.trace.budget.exhausted()
    }

    fn push(&mut self, action: Action, arch: &CellArch, value: f64, parent: Option<u32>) {
        self.trace.events.push(TraceEvent {
            step: self.step,
            action,
            arch_id: arch.id(),
            value,
            cum_budget: self.trace.budget.consumed,
            parent,
        });
    }

    /// Full evaluation; `None` when the budget is already spent.
    fn evaluate(&mut self, arch: &CellArch, parent: Option<u32>) -> Result<Option<Evaluation>> {
        self.evaluate_at(arch, self.eval.max_epochs(), parent)
    }

    fn evaluate_at(&mut self, arch: &CellArch, epochs: usize, parent: Option<u32>) -> Result<Option<Evaluation>> {
        if self.exhausted() {
            return Ok(None);
        }
        let ev = self.eval.evaluate(arch, epochs)?;
        self.trace.budget.charge(ev.cost);
        let full = epochs >= self.eval.max_epochs();
        self.push(if full { Action::Evaluated } else { Action::Partial }, arch, ev.val_acc, parent);
        if full && self.best.is_none_or(|(_, b)| ev.val_acc > b.val_acc) {
            self.best = Some((arch.id(), ev));
        }
        Ok(Some(ev))
    }

    /// Cached zero-cost score; `None` when the budget is already spent.
    fn score(&mut self, arch: &CellArch) -> Result<Option<f64>> {
        if let Some(&v) = self.cache.get(&arch.id()) {
            self.trace.cache_hits += 1;
            return Ok(Some(v));
        }
        if self.exhausted() {
            return Ok(None);
        }
        let (v, cost) = self.eval.score(arch)?;
        self.trace.budget.charge(cost);
        self.trace.score_computations += 1;
        self.cache.insert(arch.id(), v);
        self.push(Action::Scored, arch, v, None);
        Ok(Some(v))
    }

    /// Highest-scoring member of `pool` (first on ties); a singleton pool
    /// is returned without scoring. `None` when the budget ran out.
    fn pick(&mut self, pool: Vec<CellArch>) -> Result<Option<CellArch>> {
        if pool.len() == 1 {
            return Ok(pool.into_iter().next());
        }
        let mut best: Option<(CellArch, f64)> = None;
        for arch in pool {
            let Some(v) = self.score(&arch)? else { return Ok(None) };
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((arch, v));
            }
        }
        Ok(best.map(|(a, _)| a))
    }

    fn finish(mut self) -> SearchTrace {
        if let Some((id, ev)) = self.best {
            self.trace.final_arch = Some(id);
            self.trace.final_val = ev.val_acc;
            self.trace.final_test = ev.test_acc;
        }
        self.trace
    }
}

fn effective_pool(assisted: bool, pool_size: usize) -> Result<usize> {
    if pool_size == 0 {
        return Err(Error::InvalidArgument("pool_size must be >= 1".into()));
    }
    Ok(if assisted { pool_size } else { 1 })
}

/// Random search: each step draws `pool_size` random archs (one when not
/// assisted) and evaluates the best-scoring one.
pub fn run_rs<E: Evaluator + ?Sized>(eval: &E, budget: f64, assisted: bool, pool_size: usize, seed: u64) -> Result<SearchTrace> {
    let pool_size = effective_pool(assisted, pool_size)?;
    let mut run = Run::new(eval, Algorithm::Rs, assisted, budget, seed)?;
    while !run.exhausted() {
        let pool: Vec<CellArch> = (0..pool_size).map(|_| random_arch(&mut run.rng)).collect();
        let Some(arch) = run.pick(pool)? else { break };
        run.evaluate(&arch, None)?;
        run.step += 1;
    }
    Ok(run.finish())
}

/// Regularized (aging) evolution. Tournament samples are drawn with
/// replacement; the assisted child is the best-scoring of `pool_size`
/// mutations of the parent.
pub fn run_rea<E: Evaluator + ?Sized>(
    eval: &E,
    budget: f64,
    assisted: bool,
    population_size: usize,
    sample_size: usize,
    pool_size: usize,
    seed: u64,
) -> Result<SearchTrace> {
    if sample_size == 0 || population_size < sample_size {
        return Err(Error::InvalidArgument(format!(
            "need population_size >= sample_size >= 1, got {population_size} and {sample_size}"
        )));
    }
    let pool_size = effective_pool(assisted, pool_size)?;
    let mut run = Run::new(eval, Algorithm::Rea, assisted, budget, seed)?;
    let mut population: VecDeque<(CellArch, f64)> = VecDeque::with_capacity(population_size);
    while population.len() < population_size {
        let arch = random_arch(&mut run.rng);
        let Some(ev) = run.evaluate(&arch, None)? else {
            run.trace.partial_population = true;
            return Ok(run.finish());
        };
        population.push_back((arch, ev.val_acc));
        run.step += 1;
    }
    while !run.exhausted() {
        let mut parent: Option<(CellArch, f64)> = None;
        for _ in 0..sample_size {
            let cand = population[run.rng.gen_range(0..population.len())];
            if parent.is_none_or(|(_, v)| cand.1 > v) {
                parent = Some(cand);
            }
        }
        let parent = parent.expect("sample_size >= 1").0;
        let pool: Vec<CellArch> = (0..pool_size).map(|_| mutate_arch(&parent, &mut run.rng)).collect();
        let Some(child) = run.pick(pool)? else { break };
        let Some(ev) = run.evaluate(&child, Some(parent.id()))? else { break };
        population.push_back((child, ev.val_acc));
        population.pop_front();
        run.step += 1;
    }
    Ok(run.finish())
}

/// Independent per-edge categorical policy with a moving-average reward
/// baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub logits: [[f64; NUM_OPS]; NUM_EDGES],
    pub baseline: f64,
}

impl Default for PolicyState {
    fn default() -> Self {
        Self { logits: [[0.0; NUM_OPS]; NUM_EDGES], baseline: 0.0 }
    }
}

impl PolicyState {
    pub fn probs(&self, edge: usize) -> [f64; NUM_OPS] {
        let row = &self.logits[edge];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p = [0.0; NUM_OPS];
        let mut z = 0.0;
        for (pk, &l) in p.iter_mut().zip(row) {
            *pk = (l - max).exp();
            z += *pk;
        }
        p.iter_mut().for_each(|v| *v /= z);
        p
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> CellArch {
        let mut ops = [0usize; NUM_EDGES];
        for (e, op) in ops.iter_mut().enumerate() {
            let p = self.probs(e);
            let u = unit_f64(rng);
            let mut acc = 0.0;
            *op = NUM_OPS - 1;
            for (k, pk) in p.iter().enumerate() {
                acc += pk;
                if u < acc {
                    *op = k;
                    break;
                }
            }
        }
        CellArch::from_indices(ops).expect("indices below NUM_OPS")
    }

    pub fn log_prob(&self, arch: &CellArch) -> f64 {
        arch.op_indices().iter().enumerate().map(|(e, &op)| self.probs(e)[op].ln()).sum()
    }

    /// Moves the baseline towards `reward`, then takes a policy-gradient
    /// step on `log π(arch)` weighted by the advantage. Returns the
    /// advantage.
    pub fn update(&mut self, arch: &CellArch, reward: f64, lr: f64, decay: f64) -> f64 {
        self.baseline = decay * self.baseline + (1.0 - decay) * reward;
        let adv = reward - self.baseline;
        for (e, &op) in arch.op_indices().iter().enumerate() {
            let p = self.probs(e);
            for (k, l) in self.logits[e].iter_mut().enumerate() {
                let onehot = if k == op { 1.0 } else { 0.0 };
                *l += lr * adv * (onehot - p[k]);
            }
        }
        adv
    }
}

/// REINFORCE over per-edge categoricals. Assisted steps evaluate the
/// best-scoring of `pool_size` mutations of the policy sample, but the
/// update is applied to the log-probability of the policy sample itself.
pub fn run_reinforce<E: Evaluator + ?Sized>(
    eval: &E,
    budget: f64,
    assisted: bool,
    pool_size: usize,
    lr: f64,
    baseline_decay: f64,
    seed: u64,
) -> Result<(SearchTrace, PolicyState)> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::InvalidArgument(format!("lr must be >= 0, got {lr}")));
    }
    if !(0.0..1.0).contains(&baseline_decay) {
        return Err(Error::InvalidArgument(format!("baseline_decay must lie in [0, 1), got {baseline_decay}")));
    }
    let pool_size = effective_pool(assisted, pool_size)?;
    let mut run = Run::new(eval, Algorithm::Reinforce, assisted, budget, seed)?;
    let mut policy = PolicyState::default();
    while !run.exhausted() {
        let sampled = policy.sample(&mut run.rng);
        run.push(Action::Sampled, &sampled, policy.log_prob(&sampled), None);
        let target = if pool_size == 1 {
            sampled
        } else {
            let pool: Vec<CellArch> = (0..pool_size).map(|_| mutate_arch(&sampled, &mut run.rng)).collect();
            let Some(child) = run.pick(pool)? else { break };
            child
        };
        let Some(ev) = run.evaluate(&target, None)? else { break };
        policy.update(&sampled, ev.val_acc, lr, baseline_decay);
        run.step += 1;
    }
    Ok((run.finish(), policy))
}

/// One Hyperband bracket: `n` configs starting at `rungs[0]` epochs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bracket {
    pub s: usize,
    pub n: usize,
    /// Epoch budget of each successive-halving rung.
    pub rungs: Vec<usize>,
}

/// Brackets `s = s_max..=0` with `s_max = ⌊log_η(b_max/b_min)⌋`,
/// `n = ⌈(s_max+1)/(s+1)·η^s⌉` and rung budgets `b_max·η^{i−s}`.
pub fn hyperband_brackets(b_min: usize, b_max: usize, eta: usize) -> Result<Vec<Bracket>> {
    if b_min == 0 || b_min > b_max {
        return Err(Error::InvalidArgument(format!("need 1 <= b_min <= b_max, got {b_min} and {b_max}")));
    }
    if eta < 2 {
        return Err(Error::InvalidArgument(format!("eta must be >= 2, got {eta}")));
    }
    let mut s_max = 0;
    while b_min * eta.pow(s_max as u32 + 1) <= b_max {
        s_max += 1;
    }
    Ok((0..=s_max)
        .rev()
        .map(|s| {
            let pow = eta.pow(s as u32);
            let n = ((s_max + 1) * pow).div_ceil(s + 1);
            let rungs = (0..=s)
                .map(|i| ((b_max as f64) / eta.pow((s - i) as u32) as f64).round().max(1.0) as usize)
                .collect();
            Bracket { s, n, rungs }
        })
        .collect())
}

/// Hyperband with successive halving; each rung keeps the top `⌊n_i/η⌋`
/// configs by validation accuracy. Assisted configs are the best-scoring
/// of `pool_size` random archs, with scores cached per arch id. Brackets
/// repeat until the budget is spent.
#[allow(clippy::too_many_arguments)]
pub fn run_hb<E: Evaluator + ?Sized>(
    eval: &E,
    budget: f64,
    assisted: bool,
    b_min: usize,
    b_max: usize,
    eta: usize,
    pool_size: usize,
    seed: u64,
) -> Result<SearchTrace> {
    if b_max > eval.max_epochs() {
        return Err(Error::InvalidArgument(format!("b_max {b_max} exceeds {} training epochs", eval.max_epochs())));
    }
    let brackets = hyperband_brackets(b_min, b_max, eta)?;
    let pool_size = effective_pool(assisted, pool_size)?;
    let mut run = Run::new(eval, Algorithm::Hb, assisted, budget, seed)?;
    let full = eval.max_epochs();
    'outer: while !run.exhausted() {
        for bracket in &brackets {
            let mut configs = Vec::with_capacity(bracket.n);
            for _ in 0..bracket.n {
                let pool: Vec<CellArch> = (0..pool_size).map(|_| random_arch(&mut run.rng)).collect();
                let Some(arch) = run.pick(pool)? else { break 'outer };
                configs.push(arch);
            }
            for (i, &epochs) in bracket.rungs.iter().enumerate() {
                let epochs = if epochs >= b_max { full } else { epochs };
                let mut scored = Vec::with_capacity(configs.len());
                for arch in &configs {
                    let Some(ev) = run.evaluate_at(arch, epochs, None)? else { break 'outer };
                    scored.push((*arch, ev.val_acc));
                }
                if i + 1 < bracket.rungs.len() {
                    let keep = (configs.len() / eta).max(1);
                    // stable sort keeps proposal order among equal accuracies
                    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
                    configs = scored.into_iter().take(keep).map(|(a, _)| a).collect();
                }
            }
            run.step += 1;
        }
    }
    Ok(run.finish())
}

/// Parameters shared by all search algorithms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchParams {
    pub budget: f64,
    pub pool_size: usize,
    pub population_size: usize,
    pub sample_size: usize,
    pub lr: f64,
    pub baseline_decay: f64,
    pub b_min: usize,
    pub b_max: usize,
    pub eta: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            budget: 600.0,
            pool_size: 8,
            population_size: 20,
            sample_size: 10,
            lr: 0.5,
            baseline_decay: 0.9,
            b_min: 2,
            b_max: 60,
            eta: 3,
        }
    }
}

pub fn run_search<E: Evaluator + ?Sized>(
    eval: &E,
    algorithm: Algorithm,
    assisted: bool,
    params: &SearchParams,
    seed: u64,
) -> Result<SearchTrace> {
    let p = params;
    match algorithm {
        Algorithm::Rs => run_rs(eval, p.budget, assisted, p.pool_size, seed),
        Algorithm::Rea => run_rea(eval, p.budget, assisted, p.population_size, p.sample_size, p.pool_size, seed),
        Algorithm::Reinforce => {
            run_reinforce(eval, p.budget, assisted, p.pool_size, p.lr, p.baseline_decay, seed).map(|(t, _)| t)
        }
        Algorithm::Hb => run_hb(eval, p.budget, assisted, p.b_min, p.b_max, p.eta, p.pool_size, seed),
    }
}

/// Seed of run `index` for a search experiment rooted at `root`. Assisted
/// and plain variants share it, so their comparison is paired.
pub fn run_seed(root: u64, algorithm: Algorithm, index: usize) -> u64 {
    derive_seed(root, &format!("search.{}.run{index}", algorithm.name()))
}

/// `runs` independent searches, in parallel, in run order.
pub fn run_many<E: Evaluator + ?Sized>(
    eval: &E,
    algorithm: Algorithm,
    assisted: bool,
    params: &SearchParams,
    runs: usize,
    root: u64,
) -> Result<Vec<SearchTrace>> {
    (0..runs)
        .into_par_iter()
        .map(|i| run_search(eval, algorithm, assisted, params, run_seed(root, algorithm, i)))
        .collect()
}

/// Mean ± std of final accuracies for one (algorithm, assisted) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub algorithm: Algorithm,
    pub assisted: bool,
    pub runs: usize,
    pub val: Summary,
    pub test: Summary,
    pub mean_evaluations: f64,
}

impl SearchSummary {
    pub fn of(traces: &[SearchTrace]) -> Result<Self> {
        let first = traces.first().ok_or_else(|| Error::InvalidArgument("no traces to summarize".into()))?;
        let done: Vec<&SearchTrace> = traces.iter().filter(|t| t.final_arch.is_some()).collect();
        let val: Vec<f64> = done.iter().map(|t| t.final_val).collect();
        let test: Vec<f64> = done.iter().map(|t| t.final_test).collect();
        Ok(Self {
            algorithm: first.algorithm,
            assisted: first.assisted,
            runs: traces.len(),
            val: Summary::of(&val),
            test: Summary::of(&test),
            mean_evaluations: traces.iter().map(|t| t.evaluations() as f64).sum::<f64>() / traces.len() as f64,
        })
    }
}
