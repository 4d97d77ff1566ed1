//! Rank correlations between metric scores and trained accuracies, and the
//! best-of-N selection protocol.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricScore;
use crate::seed::derive_seed;
use crate::trainer::BenchTable;

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { what: "paired samples".into(), expected: xs.len(), got: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 pairs, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    Ok(())
}

/// 1-based ranks; tied values share the average of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation of a constant sequence".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's ρ: Pearson correlation of average ranks.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Pair counts behind Kendall's tau-b.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KendallCounts {
    pub pairs: u64,
    /// Pairs tied in `xs` (including joint ties).
    pub x_ties: u64,
    /// Pairs tied in `ys` (including joint ties).
    pub y_ties: u64,
    /// Pairs tied in both.
    pub joint_ties: u64,
    /// Strictly discordant pairs.
    pub discordant: u64,
}

impl KendallCounts {
    pub fn concordant(&self) -> u64 {
        self.pairs - self.x_ties - self.y_ties + self.joint_ties - self.discordant
    }

    pub fn tau_b(&self) -> Result<f64> {
        let dx = (self.pairs - self.x_ties) as f64;
        let dy = (self.pairs - self.y_ties) as f64;
        if dx == 0.0 || dy == 0.0 {
            return Err(Error::Undefined("kendall tau of an all-tied sequence".into()));
        }
        let num = self.concordant() as f64 - self.discordant as f64;
        Ok((num / (dx * dy).sqrt()).clamp(-1.0, 1.0))
    }
}

fn tie_pairs_sorted<T: PartialEq>(sorted: impl Iterator<Item = T>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<T> = None;
    for v in sorted {
        if prev.as_ref() == Some(&v) {
            run += 1;
        } else {
            total += run * run.saturating_sub(1) / 2;
            run = 1;
        }
        prev = Some(v);
    }
    total + run * run.saturating_sub(1) / 2
}

/// Sorts `ys` in place and returns how many strictly inverted pairs it held.
fn merge_count(ys: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = ys.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut ys[..mid], buf) + merge_count(&mut ys[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if ys[j] < ys[i] {
            swaps += (mid - i) as u64;
            buf.push(ys[j]);
            j += 1;
        } else {
            buf.push(ys[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&ys[i..mid]);
    buf.extend_from_slice(&ys[j..n]);
    ys.copy_from_slice(buf);
    swaps
}

/// Pair counts in `O(n log n)`: sort by `(x, y)`, then count inversions of
/// `y` with a merge sort.
pub fn kendall_counts(xs: &[f64], ys: &[f64]) -> Result<KendallCounts> {
    check_pair(xs, ys)?;
    let n = xs.len() as u64;
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(ys[a].total_cmp(&ys[b])));
    let x_ties = tie_pairs_sorted(order.iter().map(|&i| xs[i]));
    let joint_ties = tie_pairs_sorted(order.iter().map(|&i| (xs[i], ys[i])));
    let mut sorted_y: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let mut buf = Vec::with_capacity(sorted_y.len());
    let discordant = merge_count(&mut sorted_y, &mut buf);
    let y_ties = tie_pairs_sorted(sorted_y.iter().copied());
    Ok(KendallCounts { pairs: n * (n - 1) / 2, x_ties, y_ties, joint_ties, discordant })
}

/// Kendall's tau-b.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<f64> {
    kendall_counts(xs, ys)?.tau_b()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub metric: String,
    pub n: usize,
    pub spearman_rho: f64,
    pub kendall_tau: f64,
    pub score_tie_pairs: u64,
    pub accuracy_tie_pairs: u64,
    /// Scored architectures dropped because their training diverged.
    pub excluded_diverged: usize,
}

/// Correlates metric values with bench test accuracy.
pub fn correlate(bench: &BenchTable, scores: &[MetricScore]) -> Result<CorrelationReport> {
    let metric = scores.first().map(|s| s.metric.name().to_string()).unwrap_or_default();
    let mut xs = Vec::with_capacity(scores.len());
    let mut ys = Vec::with_capacity(scores.len());
    let mut excluded = 0;
    for s in scores {
        let id = s.arch_id.ok_or_else(|| Error::InvalidArgument("score without arch id".into()))?;
        let r = bench.get(id).ok_or_else(|| Error::InvalidArgument(format!("arch {id} is not in the bench")))?;
        if r.diverged {
            excluded += 1;
            continue;
        }
        xs.push(s.value);
        ys.push(r.test_acc);
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 usable pairs, got {}", xs.len())));
    }
    let counts = kendall_counts(&xs, &ys)?;
    Ok(CorrelationReport {
        metric,
        n: xs.len(),
        spearman_rho: spearman_rho(&xs, &ys)?,
        kendall_tau: counts.tau_b()?,
        score_tie_pairs: counts.x_ties,
        accuracy_tie_pairs: counts.y_ties,
        excluded_diverged: excluded,
    })
}

pub fn write_correlation_csv<W: Write>(out: W, reports: &[CorrelationReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Picker {
    Metric,
    Random,
    Optimal,
}

/// Accuracies of the architectures chosen by one picker across all runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PickerOutcome {
    pub picker: Picker,
    pub arch_ids: Vec<u32>,
    pub val_acc: Vec<f64>,
    pub test_acc: Vec<f64>,
}

impl PickerOutcome {
    fn new(picker: Picker) -> Self {
        Self { picker, arch_ids: Vec::new(), val_acc: Vec::new(), test_acc: Vec::new() }
    }

    pub fn val(&self) -> Summary {
        Summary::of(&self.val_acc)
    }

    pub fn test(&self) -> Summary {
        Summary::of(&self.test_acc)
    }

    /// Standard error of the mean test accuracy.
    pub fn test_std_err(&self) -> f64 {
        self.test().std / (self.test_acc.len() as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub metric: String,
    pub n: usize,
    pub runs: usize,
    pub selected: PickerOutcome,
    pub random: PickerOutcome,
    pub optimal: PickerOutcome,
}

#[derive(Serialize)]
struct SelectionRow<'a> {
    metric: &'a str,
    n: usize,
    runs: usize,
    picker: Picker,
    val_mean: f64,
    val_std: f64,
    test_mean: f64,
    test_std: f64,
}

impl SelectionReport {
    pub fn write_csv<W: Write>(reports: &[SelectionReport], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in reports {
            for o in [&r.selected, &r.random, &r.optimal] {
                let (val, test) = (o.val(), o.test());
                w.serialize(SelectionRow {
                    metric: &r.metric,
                    n: r.n,
                    runs: r.runs,
                    picker: o.picker,
                    val_mean: val.mean,
                    val_std: val.std,
                    test_mean: test.mean,
                    test_std: test.std,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn argmax_first(ids: &[u32], key: impl Fn(u32) -> f64) -> u32 {
    let mut best = ids[0];
    let mut best_v = key(best);
    for &id in &ids[1..] {
        let v = key(id);
        if v.total_cmp(&best_v) == Ordering::Greater {
            best = id;
            best_v = v;
        }
    }
    best
}

/// Repeats: draw `n` distinct candidates, keep the one the metric ranks
/// highest (first drawn on ties), and compare with a uniformly random
/// candidate and the best-test-accuracy candidate of the same draw.
///
/// Candidates are the non-diverged bench entries that have a score.
pub fn best_of_n_selection(
    metric: &str,
    scores: &BTreeMap<u32, f64>,
    bench: &BenchTable,
    n: usize,
    runs: usize,
    seed: u64,
) -> Result<SelectionReport> {
    let pool: Vec<u32> = bench.usable_ids().into_iter().filter(|id| scores.contains_key(id)).collect();
    if n == 0 || n > pool.len() {
        return Err(Error::InvalidArgument(format!("N={n} outside 1..={} scored bench entries", pool.len())));
    }
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be >= 1".into()));
    }
    let acc = |id: u32| bench.get(id).expect("pool ids come from the bench");
    let mut selected = PickerOutcome::new(Picker::Metric);
    let mut random = PickerOutcome::new(Picker::Random);
    let mut optimal = PickerOutcome::new(Picker::Optimal);
    for run in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("selection.run{run}")));
        let draw: Vec<u32> = sample(&mut rng, pool.len(), n).into_iter().map(|i| pool[i]).collect();
        let picks = [
            argmax_first(&draw, |id| scores[&id]),
            draw[rng.gen_range(0..n)],
            argmax_first(&draw, |id| acc(id).test_acc),
        ];
        for (out, id) in [&mut selected, &mut random, &mut optimal].into_iter().zip(picks) {
            out.arch_ids.push(id);
            out.val_acc.push(acc(id).val_acc);
            out.test_acc.push(acc(id).test_acc);
        }
    }
    Ok(SelectionReport { metric: metric.to_string(), n, runs, selected, random, optimal })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 0.5);
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(matches!(spearman_rho(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::Undefined(_))));
        assert!(spearman_rho(&[1.0], &[1.0]).is_err());
        assert!(spearman_rho(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[5.0, 1.0, 5.0, 3.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn kendall_examples() {
        let t = kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((t - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(matches!(kendall_tau(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), Err(Error::Undefined(_))));
    }

    #[test]
    fn kendall_counts_with_ties() {
        // x: a a b, y: 1 2 2 → pairs (0,1) x-tie, (0,2) concordant, (1,2) y-tie
        let c = kendall_counts(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap();
        assert_eq!((c.pairs, c.x_ties, c.y_ties, c.joint_ties, c.discordant), (3, 1, 1, 0, 0));
        assert_eq!(c.concordant(), 1);
        assert!((c.tau_b().unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn summary_uses_sample_std() {
        let s = Summary::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(Summary::of(&[4.0]).std, 0.0);
    }
}
