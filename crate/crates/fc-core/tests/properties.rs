//! Property suites over randomized inputs: estimator identities, fold
//! partition laws, AUC invariances, and aggregation symmetries.

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use fc_core::connectivity::{
    pearson_matrix, rank_transform, spearman_matrix, unvectorize_upper, vectorize_upper,
    ConnectivityMatrix, Method,
};
use fc_core::dataset::split_stratified_labels;
use fc_core::evaluation::{roc_auc, stratified_kfold, Stats, StdMode};

fn series_strategy() -> impl Strategy<Value = Array2<f64>> {
    (4usize..15, 2usize..6).prop_flat_map(|(t, r)| {
        proptest::collection::vec(-50i32..50, t * r).prop_map(move |vals| {
            // Quantized values inject ties; a final ramp guarantees no
            // column is constant.
            let mut m = Array2::from_shape_fn((t, r), |(i, j)| f64::from(vals[i * r + j]) / 10.0);
            for c in 0..r {
                m[[0, c]] += 0.01 * (c as f64 + 1.0);
                m[[t - 1, c]] -= 0.01 * (c as f64 + 1.0);
            }
            m
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spearman_is_pearson_of_ranks(series in series_strategy()) {
        let direct = match spearman_matrix(&series) {
            Ok(cm) => cm,
            Err(_) => return Ok(()), // constant column after quantization
        };
        let composed = pearson_matrix(&rank_transform(&series)).unwrap();
        for (a, b) in direct.values.iter().zip(composed.values.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn estimator_outputs_are_symmetric_unit_diagonal_bounded(series in series_strategy()) {
        for method in [Method::Pearson, Method::Spearman] {
            let cm = match method {
                Method::Pearson => pearson_matrix(&series),
                Method::Spearman => spearman_matrix(&series),
                Method::Partial => unreachable!(),
            };
            let cm = match cm { Ok(c) => c, Err(_) => return Ok(()) };
            let r = cm.r();
            for i in 0..r {
                prop_assert_eq!(cm.values[[i, i]], 1.0);
                for j in 0..r {
                    prop_assert!((cm.values[[i, j]] - cm.values[[j, i]]).abs() <= 1e-12);
                    prop_assert!(cm.values[[i, j]].abs() <= 1.0);
                }
            }
        }
    }

    #[test]
    fn vectorize_unvectorize_is_identity(
        r in 2usize..12,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let len = r * (r - 1) / 2;
        let v = Array1::from_shape_fn(len, |_| rng.gen_range(-1.0..1.0));
        let m = unvectorize_upper(&v, r).unwrap();
        let cm = ConnectivityMatrix { values: m, method: Method::Pearson, subject_id: String::new() };
        prop_assert_eq!(vectorize_upper(&cm), v);
    }

    #[test]
    fn kfold_partitions_are_disjoint_and_exhaustive(
        n_pos in 5usize..25,
        n_neg in 5usize..25,
        k in 2usize..5,
        seed in any::<u64>(),
    ) {
        let labels: Vec<u8> = [vec![1u8; n_pos], vec![0u8; n_neg]].concat();
        let folds = stratified_kfold(&labels, k, seed).unwrap();
        let n = labels.len();
        let mut seen = vec![0usize; n];
        for (train, holdout) in &folds {
            for &i in holdout {
                seen[i] += 1;
            }
            // train and holdout are disjoint and cover everything.
            let mut all: Vec<usize> = train.iter().chain(holdout.iter()).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            // Class balance within one of exact stratification.
            let hold_pos = holdout.iter().filter(|&&i| labels[i] == 1).count() as f64;
            prop_assert!((hold_pos - n_pos as f64 / k as f64).abs() < 1.0 + 1e-9);
        }
        // Every index held out exactly once.
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn split_plan_is_disjoint_exhaustive_stratified(
        n_pos in 6usize..40,
        n_neg in 6usize..40,
        seed in any::<u64>(),
    ) {
        let labels: Vec<u8> = [vec![1u8; n_pos], vec![0u8; n_neg]].concat();
        let plan = split_stratified_labels(&labels, (0.6, 0.2, 0.2), seed).unwrap();
        let mut all: Vec<usize> = plan
            .train_idx.iter()
            .chain(&plan.val_idx)
            .chain(&plan.test_idx)
            .copied()
            .collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for (part, frac) in [(&plan.train_idx, 0.6), (&plan.val_idx, 0.2), (&plan.test_idx, 0.2)] {
            let pos = part.iter().filter(|&&i| labels[i] == 1).count() as f64;
            prop_assert!((pos - frac * n_pos as f64).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn auc_is_invariant_under_increasing_transforms(
        scores in proptest::collection::vec(-5.0f64..5.0, 4..30),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let n = scores.len();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
        if labels.iter().all(|&l| l == labels[0]) {
            return Ok(());
        }
        let base = roc_auc(&labels, &scores).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| 3.5 * s + 11.0).collect();
        let cubic: Vec<f64> = scores.iter().map(|s| s.powi(3) + s).collect();
        let expo: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        for t in [affine, cubic, expo] {
            let v = roc_auc(&labels, &t).unwrap();
            prop_assert!((v - base).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_complement_under_score_negation(
        raw in proptest::collection::vec(0u32..1_000_000, 4..30),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        // Distinct integers -> tie-free scores.
        let mut dedup = raw.clone();
        dedup.sort_unstable();
        dedup.dedup();
        if dedup.len() < 4 {
            return Ok(());
        }
        let scores: Vec<f64> = dedup.iter().map(|&v| f64::from(v)).collect();
        let n = scores.len();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2) as u8).collect();
        if labels.iter().all(|&l| l == labels[0]) {
            return Ok(());
        }
        let fwd = roc_auc(&labels, &scores).unwrap();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let rev = roc_auc(&labels, &neg).unwrap();
        prop_assert!((fwd + rev - 1.0).abs() < 1e-12);
    }

    #[test]
    fn aggregation_is_permutation_invariant(
        scores in proptest::collection::vec(0.0f64..1.0, 2..20),
        rotation in 0usize..20,
    ) {
        let base = Stats::from_scores(&scores, StdMode::Sample).unwrap();
        let mut rotated = scores.clone();
        rotated.rotate_left(rotation % scores.len());
        let after = Stats::from_scores(&rotated, StdMode::Sample).unwrap();
        prop_assert_eq!(base.min, after.min);
        prop_assert_eq!(base.max, after.max);
        prop_assert!((base.average - after.average).abs() < 1e-12);
        prop_assert!((base.std - after.std).abs() < 1e-9);
    }

    #[test]
    fn sample_and_population_std_relate_correctly(
        scores in proptest::collection::vec(0.0f64..1.0, 2..20),
    ) {
        let sample = Stats::from_scores(&scores, StdMode::Sample).unwrap();
        let population = Stats::from_scores(&scores, StdMode::Population).unwrap();
        let n = scores.len() as f64;
        // population std = sample std * sqrt((n-1)/n)
        prop_assert!((population.std - sample.std * ((n - 1.0) / n).sqrt()).abs() < 1e-9);
    }
}
