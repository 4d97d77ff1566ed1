//! Rank correlation between metric scores and trained accuracy on a small
//! bench built from an experiment config.

use gradsign::experiment::{Experiment, ExperimentConfig};
use gradsign::metrics::MetricKind;
use gradsign::stats::correlate;
use gradsign::trainer::build_bench;

fn main() -> gradsign::Result<()> {
    let config = ExperimentConfig::from_toml("[dataset]\nn = 600\n[train]\nepochs = 15\n[bench]\narchs = 60\n[select]\nn = 10\n[search.params]\nb_max = 15\n")?;
    let exp = Experiment::new(config)?;
    let ids = exp.bench_ids();
    let bench = build_bench(&exp.bench_setup(), &ids, 1, None)?;
    for metric in [MetricKind::GradSign, MetricKind::GradNorm, MetricKind::Synflow] {
        let scores: Vec<_> = exp.score_ids(metric, &ids)?.into_iter().filter_map(|(_, s)| s.ok()).collect();
        let r = correlate(&bench, &scores)?;
        println!("{:<10} n={} spearman {:+.3} kendall {:+.3}", metric.name(), r.n, r.spearman_rho, r.kendall_tau);
    }
    Ok(())
}
