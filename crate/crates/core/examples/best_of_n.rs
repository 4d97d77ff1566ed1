//! Picks the highest-scoring of N sampled cells and compares it with a
//! random and an oracle pick.

use std::collections::BTreeMap;

use gradsign::experiment::{Experiment, ExperimentConfig};
use gradsign::metrics::MetricKind;
use gradsign::stats::best_of_n_selection;
use gradsign::trainer::build_bench;

fn main() -> gradsign::Result<()> {
    let config = ExperimentConfig::from_toml("[dataset]\nn = 600\n[train]\nepochs = 15\n[bench]\narchs = 60\n[select]\nn = 10\nruns = 200\n[search.params]\nb_max = 15\n")?;
    let exp = Experiment::new(config)?;
    let ids = exp.bench_ids();
    let bench = build_bench(&exp.bench_setup(), &ids, 1, None)?;
    let scores: BTreeMap<u32, f64> =
        exp.score_ids(MetricKind::GradSign, &ids)?.into_iter().filter_map(|(id, s)| Some((id, s.ok()?.value))).collect();
    let sel = &exp.config.select;
    let report = best_of_n_selection("gradsign", &scores, &bench, sel.n, sel.runs, exp.config.seeds()["select"])?;
    for o in [&report.selected, &report.random, &report.optimal] {
        let t = o.test();
        println!("{:<8?} test accuracy {:.4} ± {:.4}", o.picker, t.mean, t.std);
    }
    Ok(())
}
