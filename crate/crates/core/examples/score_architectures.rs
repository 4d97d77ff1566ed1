//! Scores a handful of random cells with GradSign and every baseline on
//! one shared batch and initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gradsign::arch::{random_arch, SearchSpaceSpec};
use gradsign::metrics::{MetricKind, MetricSpec, Scorer};
use gradsign::tensor::LossKind;
use gradsign::trainer::{make_synthetic_dataset, DatasetKind};

fn main() -> gradsign::Result<()> {
    let data = make_synthetic_dataset(DatasetKind::TwoSpirals, 600, 2, 2, 0.1, 3)?;
    let batch = data.scoring_batch(64, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let archs: Vec<_> = (0..6).map(|_| random_arch(&mut rng)).collect();

    print!("{:>6}", "id");
    MetricKind::ALL.iter().for_each(|m| print!("{:>13}", m.name()));
    println!();
    let columns: Vec<_> = MetricKind::ALL
        .iter()
        .map(|&metric| {
            let spec = MetricSpec { metric, loss: LossKind::CrossEntropy, zero_tol: 0.0, inits: 1 };
            Scorer { spec, space: SearchSpaceSpec::default(), num_classes: 2, batch: batch.clone(), seed: 9 }.score_pool(&archs, true)
        })
        .collect();
    for (i, arch) in archs.iter().enumerate() {
        print!("{:>6}", arch.id());
        for col in &columns {
            match &col[i] {
                Ok(s) => print!("{:>13.4e}", s.value),
                Err(_) => print!("{:>13}", "n/a"),
            }
        }
        println!();
    }
    Ok(())
}
