use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gradsign::arch::{random_arch, CellArch, SearchSpaceSpec};
use gradsign::metrics::*;
use gradsign::tensor::{
    init_params, per_sample_gradients, Activation, Batch, GradMatrix, Labels, LossKind, NetworkSpec, Tensor,
};
use gradsign::theory::sign_agreement_count;
use gradsign::trainer::{make_synthetic_dataset, DatasetKind};

fn scorer(metric: MetricKind) -> Scorer {
    let data = make_synthetic_dataset(DatasetKind::TwoSpirals, 400, 2, 2, 0.1, 3).unwrap();
    Scorer {
        spec: MetricSpec::new(metric),
        space: SearchSpaceSpec { cell_width: 8, num_cells: 1 },
        num_classes: 2,
        batch: data.scoring_batch(32, 4).unwrap(),
        seed: 5,
    }
}

fn pool(n: usize, seed: u64) -> Vec<CellArch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_arch(&mut rng)).collect()
}

fn values(scores: Vec<gradsign::Result<MetricScore>>) -> Vec<Option<f64>> {
    scores.into_iter().map(|r| r.ok().map(|s| s.value)).collect()
}

#[test]
fn parallel_scoring_equals_serial_scoring() {
    let archs = pool(100, 1);
    for metric in [MetricKind::GradSign, MetricKind::Synflow, MetricKind::Naswot] {
        let s = scorer(metric);
        let serial = values(s.score_pool(&archs, false));
        assert_eq!(serial, values(s.score_pool(&archs, true)), "{metric}");
        assert_eq!(serial, values(s.score_pool(&archs, false)), "{metric}");
    }
}

#[test]
fn singleton_pool_equals_direct_call() {
    let s = scorer(MetricKind::GradSign);
    let arch = pool(1, 2)[0];
    let pooled = s.score_pool(&[arch], true).pop().unwrap().unwrap();
    assert_eq!(pooled, s.score(&arch).unwrap());
}

#[test]
fn every_metric_scores_a_dense_cell() {
    let arch = CellArch::from_indices([2, 3, 2, 4, 2, 3]).unwrap();
    for metric in MetricKind::ALL {
        let s = scorer(metric).score(&arch).unwrap();
        assert!(s.value.is_finite(), "{metric}: {}", s.value);
        assert_eq!(s.arch_id, Some(arch.id()));
    }
}

#[test]
fn naswot_rejects_relu_free_cells() {
    let arch = CellArch::from_indices([3, 1, 4, 3, 0, 1]).unwrap();
    assert!(matches!(scorer(MetricKind::Naswot).score(&arch), Err(gradsign::Error::UnsupportedMetric { .. })));
}

fn matrix(max_n: usize, max_m: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (2..=max_n, 1..=max_m).prop_flat_map(|(n, m)| {
        (Just(n), Just(m), prop::collection::vec(prop_oneof![4 => -1.0f64..1.0, 1 => Just(0.0)], n * m))
    })
}

proptest! {
    #[test]
    fn gradsign_is_bounded_and_counts_signs((n, m, data) in matrix(10, 12)) {
        let g = GradMatrix::new(n, m, data.clone()).unwrap();
        let tau = sign_matrix(&g, 0.0).unwrap().gradsign();
        prop_assert!(tau >= 0.0 && tau <= (n * m) as f64);
        let oracle: i64 = (0..m)
            .map(|k| {
                let pos = (0..n).filter(|&i| data[i * m + k] > 0.0).count() as i64;
                let neg = (0..n).filter(|&i| data[i * m + k] < 0.0).count() as i64;
                (pos - neg).abs()
            })
            .sum();
        prop_assert_eq!(tau, oracle as f64);
        if data.iter().all(|v| *v != 0.0) {
            // |n - 2p| has the parity of n
            prop_assert_eq!(tau as usize % 2, (n * m) % 2);
        }
    }

    #[test]
    fn zero_band_only_removes_votes((n, m, data) in matrix(8, 8), tol in 0.0f64..0.5) {
        let g = GradMatrix::new(n, m, data.clone()).unwrap();
        let banded = sign_matrix(&g, tol).unwrap();
        for (s, v) in banded.data().iter().zip(&data) {
            let expected = if v.abs() <= tol { 0 } else if *v > 0.0 { 1 } else { -1 };
            prop_assert_eq!(*s, expected);
        }
    }

    #[test]
    fn gradsign_ignores_sample_order_and_positive_rescaling(
        (n, m, data) in matrix(8, 10),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let scales: Vec<f64> = (0..m).map(|_| rng.gen_range(1e-3..1e3)).collect();
        let moved: Vec<f64> = order.iter().flat_map(|&i| (0..m).map(|k| data[i * m + k] * scales[k]).collect::<Vec<_>>()).collect();
        let a = sign_matrix(&GradMatrix::new(n, m, data).unwrap(), 0.0).unwrap().gradsign();
        let b = sign_matrix(&GradMatrix::new(n, m, moved).unwrap(), 0.0).unwrap().gradsign();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sign_agreement_count_follows_from_gradsign_columns(seed in any::<u64>(), n in 2usize..10, h in 1usize..5) {
        // tanh nets give nonzero gradients almost surely, so every column is ±1
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = NetworkSpec::mlp(2, &[(h, Activation::Tanh)], 1).unwrap();
        let x = Tensor::matrix(n, 2, (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y = Tensor::matrix(n, 1, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let batch = Batch::new(x, Labels::Targets(y)).unwrap();
        let theta = init_params(&net, rng.gen());
        let g = per_sample_gradients(&net, &theta, &batch, LossKind::Mse).unwrap();
        prop_assume!(g.data().iter().all(|v| *v != 0.0));
        let signs = sign_matrix(&g, 0.0).unwrap();
        let column_taus: Vec<f64> = (0..signs.cols())
            .map(|k| (0..signs.rows()).map(|i| signs.get(i, k) as f64).sum::<f64>().abs())
            .collect();
        let predicted = (signs.cols() * n * n) as f64 / 2.0 + column_taus.iter().map(|t| t * t).sum::<f64>() / 2.0;
        let agree = sign_agreement_count(&net, &theta, &batch, LossKind::Mse).unwrap();
        prop_assert_eq!(agree as f64, predicted);
        let tau = gradsign_score(&net, &theta, &batch, LossKind::Mse, 0.0).unwrap().value;
        prop_assert_eq!(tau, column_taus.iter().sum::<f64>());
    }
}
