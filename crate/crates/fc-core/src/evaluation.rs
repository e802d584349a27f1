//! Confusion-based metrics, ROC AUC, stratified k-fold, repeated
//! cross-validation, and replicated split evaluation with min/avg/max/std
//! aggregation.

use serde::{Deserialize, Serialize};

use crate::connectivity::FeatureMatrix;
use crate::dataset;
use crate::error::{Error, Result};
use crate::exec;

/// Splitmix64 mix of a master seed and a salt; every derived stream
/// (replicates, folds, grid cells) gets its own decorrelated seed.
pub fn derive_seed(master: u64, salt: u64) -> u64 {
    let mut z = master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counts with label 1 as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Tally a prediction vector against ground truth.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionCounts> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty set"));
    }
    if y_true.iter().chain(y_pred.iter()).any(|&v| v > 1) {
        return Err(Error::invalid("labels must be binary"));
    }
    let mut cc = ConfusionCounts {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cc.tp += 1,
            (0, 1) => cc.fp += 1,
            (0, 0) => cc.tn += 1,
            (1, 0) => cc.fn_ += 1,
            _ => unreachable!(),
        }
    }
    Ok(cc)
}

pub fn accuracy(cc: &ConfusionCounts) -> f64 {
    (cc.tp + cc.tn) as f64 / cc.total() as f64
}

/// True-positive rate; `None` when there are no positives to rate.
pub fn sensitivity(cc: &ConfusionCounts) -> Option<f64> {
    let pos = cc.tp + cc.fn_;
    (pos > 0).then(|| cc.tp as f64 / pos as f64)
}

/// True-negative rate; `None` when there are no negatives to rate.
pub fn specificity(cc: &ConfusionCounts) -> Option<f64> {
    let neg = cc.tn + cc.fp;
    (neg > 0).then(|| cc.tn as f64 / neg as f64)
}

/// ROC AUC by the Mann-Whitney statistic: with average ranks over the pooled
/// scores, AUC = (rank sum of positives - P(P+1)/2) / (P * N). Ties between
/// a positive and a negative count half.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels vs {} scores",
            y_true.len(),
            scores.len()
        )));
    }
    if y_true.iter().any(|&v| v > 1) {
        return Err(Error::invalid("labels must be binary"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let pos = y_true.iter().filter(|&&v| v == 1).count();
    let neg = y_true.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ROC AUC needs both classes present"));
    }

    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if y_true[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Per-class shuffled round-robin fold assignment. Each index lands in
/// exactly one holdout and per-fold class balance stays within one.
pub fn stratified_kfold(
    labels: &[u8],
    k: usize,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::invalid("k must be at least 2"));
    }
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    let mut holdouts: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::invalid(format!(
                "class {class} has {} members, fewer than k = {k}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (pos, idx) in members.into_iter().enumerate() {
            holdouts[pos % k].push(idx);
        }
    }

    let mut folds = Vec::with_capacity(k);
    for mut holdout in holdouts {
        holdout.sort_unstable();
        let train: Vec<usize> = (0..labels.len()).filter(|i| !holdout.contains(i)).collect();
        folds.push((train, holdout));
    }
    Ok(folds)
}

/// Standard-deviation convention for replicate aggregation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum StdMode {
    /// n-1 denominator (default reporting convention).
    #[default]
    Sample,
    /// n denominator.
    Population,
}

/// Min/average/max/std of one metric over replicates, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub average: f64,
    pub max: f64,
    pub std: f64,
}

impl Stats {
    /// Aggregate raw fractional scores (0..1) into percent statistics.
    pub fn from_scores(scores: &[f64], mode: StdMode) -> Result<Stats> {
        if scores.is_empty() {
            return Err(Error::invalid("no scores to aggregate"));
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ss: f64 = scores.iter().map(|s| (s - mean) * (s - mean)).sum();
        let denom = match mode {
            StdMode::Sample => (n - 1.0).max(1.0),
            StdMode::Population => n,
        };
        let std = (ss / denom).sqrt();
        Ok(Stats {
            min: min * 100.0,
            average: mean * 100.0,
            max: max * 100.0,
            std: std * 100.0,
        })
    }
}

/// Replicate-aggregated accuracy, sensitivity, specificity, and AUC, each as
/// min/average/max/std in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: Stats,
    pub sensitivity: Stats,
    pub specificity: Stats,
    pub auc: Stats,
    /// Number of fold-or-replicate scores behind each statistic.
    pub n_scores: usize,
    pub std_mode: StdMode,
}

/// Raw per-fold (or per-replicate) metric values, pooled before aggregation.
#[derive(Debug, Clone, Default)]
pub struct ScorePool {
    pub accuracy: Vec<f64>,
    pub sensitivity: Vec<f64>,
    pub specificity: Vec<f64>,
    pub auc: Vec<f64>,
}

impl ScorePool {
    pub fn push_eval(&mut self, y_true: &[u8], scores: &[f64], threshold: f64) -> Result<()> {
        let y_pred: Vec<u8> = scores
            .iter()
            .map(|&s| if s >= threshold { 1 } else { 0 })
            .collect();
        let cc = confusion(y_true, &y_pred)?;
        self.accuracy.push(accuracy(&cc));
        if let Some(s) = sensitivity(&cc) {
            self.sensitivity.push(s);
        }
        if let Some(s) = specificity(&cc) {
            self.specificity.push(s);
        }
        self.auc.push(roc_auc(y_true, scores)?);
        Ok(())
    }

    pub fn aggregate(&self, mode: StdMode) -> Result<MetricReport> {
        Ok(MetricReport {
            accuracy: Stats::from_scores(&self.accuracy, mode)?,
            sensitivity: Stats::from_scores(&self.sensitivity, mode)?,
            specificity: Stats::from_scores(&self.specificity, mode)?,
            auc: Stats::from_scores(&self.auc, mode)?,
            n_scores: self.accuracy.len(),
            std_mode: mode,
        })
    }
}

/// Fit-and-score callback: train on the first matrix, return P(label = 1)
/// scores for the second. The seed is item-specific and already derived.
pub trait FitScore: Sync {
    fn fit_score(&self, train: &FeatureMatrix, test: &FeatureMatrix, seed: u64)
        -> Result<Vec<f64>>;
}

impl<F> FitScore for F
where
    F: Fn(&FeatureMatrix, &FeatureMatrix, u64) -> Result<Vec<f64>> + Sync,
{
    fn fit_score(
        &self,
        train: &FeatureMatrix,
        test: &FeatureMatrix,
        seed: u64,
    ) -> Result<Vec<f64>> {
        self(train, test, seed)
    }
}

/// Repeated stratified k-fold: every repeat reshuffles folds with a fresh
/// derived seed, and metrics are pooled over all fold x repeat scores before
/// aggregation. Folds run in parallel; pooling order is fixed by (repeat,
/// fold) coordinates, so the report does not depend on scheduling.
pub fn repeated_cv<F: FitScore>(
    fm: &FeatureMatrix,
    k: usize,
    repeats: usize,
    seed: u64,
    mode: StdMode,
    fitter: &F,
) -> Result<MetricReport> {
    if repeats == 0 {
        return Err(Error::invalid("repeats must be at least 1"));
    }
    let mut jobs: Vec<(usize, usize, Vec<usize>, Vec<usize>)> = Vec::new();
    for rep in 0..repeats {
        let folds = stratified_kfold(&fm.labels, k, derive_seed(seed, rep as u64))?;
        for (f, (train, holdout)) in folds.into_iter().enumerate() {
            jobs.push((rep, f, train, holdout));
        }
    }

    let results: Vec<Result<(Vec<u8>, Vec<f64>)>> = exec::map(jobs.len(), |j| {
        let (rep, f, train_idx, holdout_idx) = &jobs[j];
        let train = fm.subset_rows(train_idx);
        let test = fm.subset_rows(holdout_idx);
        let item_seed = derive_seed(seed, (rep * 7919 + f + 1) as u64);
        let scores =
            fitter
                .fit_score(&train, &test, item_seed)
                .map_err(|e| Error::FoldFailure {
                    fold: *f,
                    repeat: *rep,
                    source: Box::new(e),
                })?;
        Ok((test.labels.clone(), scores))
    });

    let mut pool = ScorePool::default();
    for res in results {
        let (y_true, scores) = res?;
        pool.push_eval(&y_true, &scores, 0.5)?;
    }
    pool.aggregate(mode)
}

/// Replicated hold-out evaluation: each replicate draws a fresh stratified
/// train/test split (train may internally reserve a validation slice via
/// `val_fraction`), fits, and scores the untouched test subjects.
pub fn replicated_split<F: FitScore>(
    fm: &FeatureMatrix,
    test_fraction: f64,
    replicates: usize,
    seed: u64,
    mode: StdMode,
    fitter: &F,
) -> Result<MetricReport> {
    if replicates == 0 {
        return Err(Error::invalid("replicates must be at least 1"));
    }
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(Error::invalid("test fraction must lie in (0, 1)"));
    }

    let results: Vec<Result<(Vec<u8>, Vec<f64>)>> = exec::map(replicates, |rep| {
        let rep_seed = derive_seed(seed, rep as u64);
        let plan = dataset::split_stratified_labels(
            &fm.labels,
            (1.0 - test_fraction, 0.0, test_fraction),
            rep_seed,
        )?;
        let train = fm.subset_rows(&plan.train_idx);
        let test = fm.subset_rows(&plan.test_idx);
        let scores = fitter
            .fit_score(&train, &test, derive_seed(seed, (rep + 1_000_003) as u64))
            .map_err(|e| Error::FoldFailure {
                fold: 0,
                repeat: rep,
                source: Box::new(e),
            })?;
        Ok((test.labels.clone(), scores))
    });

    let mut pool = ScorePool::default();
    for res in results {
        let (y_true, scores) = res?;
        pool.push_eval(&y_true, &scores, 0.5)?;
    }
    pool.aggregate(mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::Provenance;
    use ndarray::Array2;

    #[test]
    fn confusion_definition_arithmetic() {
        let y_true = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
        let y_pred = [1, 1, 1, 0, 1, 1, 0, 0, 0, 0];
        let cc = confusion(&y_true, &y_pred).unwrap();
        assert_eq!((cc.tp, cc.fn_, cc.fp, cc.tn), (3, 1, 2, 4));
        assert!((sensitivity(&cc).unwrap() - 0.75).abs() < 1e-12);
        assert!((specificity(&cc).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((accuracy(&cc) - 0.70).abs() < 1e-12);
    }

    #[test]
    fn all_correct_gives_ones() {
        let y = [1, 0, 1, 0];
        let cc = confusion(&y, &y).unwrap();
        assert_eq!(accuracy(&cc), 1.0);
        assert_eq!(sensitivity(&cc), Some(1.0));
        assert_eq!(specificity(&cc), Some(1.0));
    }

    #[test]
    fn empty_negative_class_has_no_specificity() {
        let y_true = [1, 1, 1];
        let y_pred = [1, 0, 1];
        let cc = confusion(&y_true, &y_pred).unwrap();
        assert_eq!(specificity(&cc), None);
        assert!(sensitivity(&cc).is_some());
    }

    #[test]
    fn auc_perfect_and_reversed() {
        let y = [1, 1, 0, 0];
        assert_eq!(roc_auc(&y, &[0.9, 0.8, 0.2, 0.1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&y, &[0.1, 0.2, 0.8, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn auc_hand_enumerated_ties() {
        // Pairs: (.9,.5)+1, (.9,.1)+1, (.5,.1)+1, (.5,.5) tie = 0.5 -> 3.5/4.
        let y = [1, 1, 0, 0];
        let auc = roc_auc(&y, &[0.9, 0.5, 0.5, 0.1]).unwrap();
        assert!((auc - 0.875).abs() < 1e-12);
    }

    #[test]
    fn auc_requires_both_classes() {
        assert!(roc_auc(&[1, 1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn kfold_exact_divisibility() {
        let labels: Vec<u8> = [vec![1u8; 10], vec![0u8; 10]].concat();
        let folds = stratified_kfold(&labels, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        for (train, holdout) in &folds {
            assert_eq!(holdout.len(), 4);
            assert_eq!(train.len(), 16);
            let pos = holdout.iter().filter(|&&i| labels[i] == 1).count();
            assert_eq!(pos, 2);
        }
    }

    #[test]
    fn kfold_leave_one_out_limit() {
        let labels: Vec<u8> = [vec![1u8; 4], vec![0u8; 4]].concat();
        let folds = stratified_kfold(&labels, 4, 1).unwrap();
        for (_, holdout) in &folds {
            assert_eq!(holdout.len(), 2);
        }
    }

    #[test]
    fn kfold_rejects_small_class() {
        let labels: Vec<u8> = [vec![1u8; 2], vec![0u8; 10]].concat();
        assert!(stratified_kfold(&labels, 3, 1).is_err());
    }

    fn constant_fm(n_pos: usize, n_neg: usize) -> FeatureMatrix {
        let n = n_pos + n_neg;
        let values = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64 * 0.01);
        let labels: Vec<u8> = (0..n).map(|i| if i < n_pos { 1 } else { 0 }).collect();
        FeatureMatrix::new(
            values,
            labels,
            vec!["a".into(), "b".into()],
            Provenance::External,
        )
        .unwrap()
    }

    #[test]
    fn constant_classifier_baseline() {
        // Majority class is negative (60%): always predicting negative gives
        // accuracy ~60%, sensitivity 0, specificity 100.
        let fm = constant_fm(20, 30);
        let fitter =
            |_train: &FeatureMatrix, test: &FeatureMatrix, _seed: u64| Ok(vec![0.25; test.n()]);
        let report = repeated_cv(&fm, 5, 2, 7, StdMode::Sample, &fitter).unwrap();
        assert!((report.accuracy.average - 60.0).abs() < 1e-9);
        assert_eq!(report.sensitivity.average, 0.0);
        assert_eq!(report.specificity.average, 100.0);
    }

    #[test]
    fn identical_scores_have_zero_std() {
        let fm = constant_fm(10, 10);
        let fitter = |_train: &FeatureMatrix, test: &FeatureMatrix, _seed: u64| {
            // Perfect scores every fold.
            Ok(test
                .labels
                .iter()
                .map(|&l| if l == 1 { 0.9 } else { 0.1 })
                .collect())
        };
        let report = repeated_cv(&fm, 5, 2, 9, StdMode::Sample, &fitter).unwrap();
        assert_eq!(report.accuracy.std, 0.0);
        assert_eq!(report.accuracy.min, report.accuracy.average);
        assert_eq!(report.accuracy.average, report.accuracy.max);
        assert_eq!(report.accuracy.average, 100.0);
    }

    #[test]
    fn replicated_split_runs_all_replicates() {
        let fm = constant_fm(10, 10);
        let fitter = |train: &FeatureMatrix, test: &FeatureMatrix, _seed: u64| {
            assert_eq!(train.n(), 16);
            assert_eq!(test.n(), 4);
            Ok(test
                .labels
                .iter()
                .map(|&l| if l == 1 { 0.8 } else { 0.3 })
                .collect())
        };
        let report = replicated_split(&fm, 0.2, 10, 11, StdMode::Sample, &fitter).unwrap();
        assert_eq!(report.n_scores, 10);
        assert_eq!(report.accuracy.average, 100.0);
    }
}
