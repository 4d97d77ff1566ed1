use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;

use gradsign::arch::{CellArch, NUM_EDGES, SPACE_SIZE};
use gradsign::search::*;
use gradsign::Result;

/// Planted landscape that counts score calls.
struct Counting {
    inner: PlantedEvaluator,
    scores: AtomicUsize,
}

impl Evaluator for Counting {
    fn max_epochs(&self) -> usize {
        self.inner.max_epochs()
    }

    fn evaluate(&self, arch: &CellArch, epochs: usize) -> Result<Evaluation> {
        self.inner.evaluate(arch, epochs)
    }

    fn score(&self, arch: &CellArch) -> Result<(f64, f64)> {
        self.scores.fetch_add(1, Ordering::Relaxed);
        self.inner.score(arch)
    }
}

/// One arch scores 1.0, everything else 0.5; multi-epoch for Hyperband.
struct Needle {
    id: u32,
}

impl Evaluator for Needle {
    fn max_epochs(&self) -> usize {
        9
    }

    fn evaluate(&self, arch: &CellArch, epochs: usize) -> Result<Evaluation> {
        let acc = if arch.id() == self.id { 1.0 } else { 0.5 };
        Ok(Evaluation { val_acc: acc, test_acc: acc, cost: epochs.min(9) as f64 / 9.0 })
    }

    fn score(&self, arch: &CellArch) -> Result<(f64, f64)> {
        Ok((arch.op_indices()[0] as f64, 0.01))
    }
}

fn params(budget: f64, pool_size: usize) -> SearchParams {
    SearchParams { budget, pool_size, b_min: 1, b_max: 1, eta: 3, ..SearchParams::default() }
}

#[test]
fn single_candidate_pool_matches_plain_search() {
    let planted = PlantedEvaluator { score_cost: 0.25, ..PlantedEvaluator::default() };
    let needle = Needle { id: 77 };
    for alg in Algorithm::ALL {
        for seed in 0..5 {
            let p = params(60.0, 1);
            let a = run_search(&planted, alg, false, &p, seed).unwrap();
            let b = run_search(&planted, alg, true, &p, seed).unwrap();
            assert_eq!(a.events, b.events, "{alg:?} seed {seed}");
            assert_eq!((a.final_arch, a.final_val), (b.final_arch, b.final_val));
            let p = SearchParams { b_min: 1, b_max: 9, ..params(40.0, 1) };
            let a = run_search(&needle, alg, false, &p, seed).unwrap();
            let b = run_search(&needle, alg, true, &p, seed).unwrap();
            assert_eq!(a.events, b.events, "{alg:?} seed {seed}");
        }
    }
}

#[test]
fn same_seed_gives_identical_traces() {
    let e = PlantedEvaluator { score_cost: 0.1, ..PlantedEvaluator::default() };
    for alg in Algorithm::ALL {
        let p = params(50.0, 4);
        assert_eq!(run_search(&e, alg, true, &p, 9).unwrap(), run_search(&e, alg, true, &p, 9).unwrap());
    }
}

#[test]
fn returned_arch_has_best_validation_accuracy() {
    let e = Needle { id: 5 };
    for alg in Algorithm::ALL {
        for assisted in [false, true] {
            let p = SearchParams { b_min: 1, b_max: 9, ..params(80.0, 4) };
            let t = run_search(&e, alg, assisted, &p, 3).unwrap();
            let best = t.events.iter().filter(|e| e.action == Action::Evaluated).map(|e| e.value).fold(f64::MIN, f64::max);
            assert_eq!(t.final_val, best, "{alg:?}");
            let first = t.events.iter().find(|e| e.action == Action::Evaluated && e.value == best).unwrap();
            assert_eq!(t.final_arch, Some(first.arch_id));
        }
    }
}

#[test]
fn exhaustive_random_search_finds_the_needle() {
    let e = Needle { id: 12_345 };
    let t = run_rs(&e, 300_000.0, false, 1, 4).unwrap();
    let seen: BTreeSet<u32> = t.events.iter().map(|e| e.arch_id).collect();
    assert_eq!(seen.len(), SPACE_SIZE as usize);
    assert_eq!(t.final_arch, Some(12_345));
    assert_eq!(t.final_val, 1.0);
}

#[test]
fn rea_finds_planted_optimum_within_200_evaluations() {
    let e = PlantedEvaluator::default();
    let target = CellArch::from_indices([4; NUM_EDGES]).unwrap().id();
    let hits = (0..100)
        .filter(|&seed| {
            let t = run_rea(&e, 200.0, false, 20, 10, 1, seed).unwrap();
            t.evaluations() <= 200 && t.events.iter().any(|e| e.arch_id == target)
        })
        .count();
    assert!(hits >= 95, "planted optimum reached in {hits}/100 runs");
}

#[test]
fn reinforce_beats_random_search_on_planted_landscape() {
    let e = PlantedEvaluator::default();
    let mut rs = 0.0;
    let mut rf = 0.0;
    for seed in 0..100 {
        let a = run_rs(&e, 150.0, false, 1, seed).unwrap();
        let (b, _) = run_reinforce(&e, 150.0, false, 1, 0.5, 0.9, seed).unwrap();
        assert_eq!(a.evaluations(), b.evaluations());
        rs += a.final_val;
        rf += b.final_val;
    }
    assert!(rf > rs, "reinforce {} vs random {}", rf / 100.0, rs / 100.0);
}

#[test]
fn reinforce_records_sampled_and_evaluated_archs() {
    let e = PlantedEvaluator::default();
    let (t, _) = run_reinforce(&e, 20.0, true, 4, 0.5, 0.9, 1).unwrap();
    let sampled = t.events.iter().filter(|e| e.action == Action::Sampled).count();
    assert_eq!(sampled, t.evaluations());
}

#[test]
fn hyperband_score_cache_computes_each_arch_once() {
    let e = Counting { inner: PlantedEvaluator { score_cost: 0.001, ..PlantedEvaluator::default() }, scores: AtomicUsize::new(0) };
    let t = run_hb(&e, 3000.0, true, 1, 1, 3, 8, 2).unwrap();
    let distinct: BTreeSet<u32> = t.events.iter().filter(|e| e.action == Action::Scored).map(|e| e.arch_id).collect();
    assert_eq!(e.scores.load(Ordering::Relaxed), t.score_computations);
    assert_eq!(t.score_computations, distinct.len());
    assert!(t.cache_hits > 0);
}

#[test]
fn hyperband_degenerate_bracket_evaluates_at_full_budget() {
    let e = Needle { id: 0 };
    let t = run_hb(&e, 20.0, false, 9, 9, 3, 1, 0).unwrap();
    assert!(t.events.iter().all(|e| e.action == Action::Evaluated));
    assert!(t.evaluations() >= 19);
}

#[test]
fn rea_population_ages_out_oldest_member() {
    let e = PlantedEvaluator::default();
    let t = run_rea(&e, 60.0, false, 5, 2, 1, 8).unwrap();
    let evals: Vec<&TraceEvent> = t.events.iter().filter(|e| e.action == Action::Evaluated).collect();
    // every child's parent lies within the five most recent evaluations
    for (i, ev) in evals.iter().enumerate().skip(5) {
        let window: Vec<u32> = evals[i - 5..i].iter().map(|e| e.arch_id).collect();
        assert!(window.contains(&ev.parent.unwrap()), "step {i}");
    }
}

#[test]
fn short_budget_flags_partial_population() {
    let e = PlantedEvaluator::default();
    let t = run_rea(&e, 5.0, false, 20, 10, 1, 0).unwrap();
    assert!(t.partial_population);
    assert_eq!(t.evaluations(), 5);
}

#[test]
fn summary_reports_mean_and_sample_std() {
    let e = PlantedEvaluator::default();
    let traces = run_many(&e, Algorithm::Rs, false, &params(10.0, 1), 6, 42).unwrap();
    let s = SearchSummary::of(&traces).unwrap();
    let vals: Vec<f64> = traces.iter().map(|t| t.final_val).collect();
    let mean = vals.iter().sum::<f64>() / 6.0;
    let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0).sqrt();
    assert!((s.val.mean - mean).abs() < 1e-12 && (s.val.std - std).abs() < 1e-12);
    assert_eq!(s.runs, 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn budget_is_never_exceeded_by_more_than_one_charge(
        seed in any::<u64>(),
        budget in 1.0f64..40.0,
        pool in 1usize..6,
        assisted in any::<bool>(),
        alg in prop::sample::select(Algorithm::ALL.to_vec()),
    ) {
        let e = Needle { id: 3 };
        let p = SearchParams { budget, pool_size: pool, population_size: 4, sample_size: 2, b_min: 1, b_max: 9, eta: 3, ..SearchParams::default() };
        let t = run_search(&e, alg, assisted, &p, seed).unwrap();
        let mut last = 0.0;
        for ev in &t.events {
            prop_assert!(ev.cum_budget >= last);
            last = ev.cum_budget;
        }
        // the most expensive single charge is one full evaluation
        prop_assert!(t.budget.consumed <= budget + 1.0 + 1e-12);
        prop_assert_eq!(t.budget.consumed, last);
    }
}
