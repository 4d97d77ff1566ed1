//! Plain and score-assisted search on a synthetic landscape where the score
//! is informative.

use gradsign::search::*;

fn main() -> gradsign::Result<()> {
    let eval = PlantedEvaluator { score_cost: 0.05, ..PlantedEvaluator::default() };
    let params = SearchParams { budget: 40.0, b_max: 1, b_min: 1, ..SearchParams::default() };
    for alg in Algorithm::ALL {
        for assisted in [false, true] {
            let traces = run_many(&eval, alg, assisted, &params, 30, 0)?;
            let s = SearchSummary::of(&traces)?;
            println!(
                "{:<10} assisted {:<5} best val {:.3} ± {:.3} over {} runs, {:.1} evaluations each",
                alg.name(),
                assisted,
                s.val.mean,
                s.val.std,
                s.runs,
                s.mean_evaluations
            );
        }
    }
    Ok(())
}
