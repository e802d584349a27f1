//! AdaBoost with depth-1 decision stumps and SAMME-style reweighting,
//! stage weights scaled by the learning rate.

use serde::{Deserialize, Serialize};

use super::{check_width, sigmoid, Classifier};
use crate::connectivity::FeatureMatrix;
use crate::error::{Error, Result};

/// Single-feature threshold rule: rows with value <= threshold get
/// `left_class`, the rest get the complement.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecisionStump {
    pub feature: usize,
    pub threshold: f64,
    pub left_class: u8,
}

impl DecisionStump {
    fn predict_row(&self, row: &[f64]) -> u8 {
        if row[self.feature] <= self.threshold {
            self.left_class
        } else {
            1 - self.left_class
        }
    }
}

/// Weighted stump ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub stumps: Vec<(DecisionStump, f64)>,
    pub n_estimators: usize,
    pub learning_rate: f64,
    /// Ensemble training error after each accepted stage.
    pub staged_training_error: Vec<f64>,
    feature_width: usize,
}

impl AdaBoostModel {
    /// Signed ensemble margin sum_m alpha_m (2 h_m(x) - 1).
    pub fn decision(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        check_width(self.feature_width, fm)?;
        Ok(fm
            .values
            .rows()
            .into_iter()
            .map(|row| {
                let r = row.as_slice().unwrap();
                self.stumps
                    .iter()
                    .map(|(stump, alpha)| alpha * (2.0 * f64::from(stump.predict_row(r)) - 1.0))
                    .sum()
            })
            .collect())
    }
}

impl Classifier for AdaBoostModel {
    fn feature_width(&self) -> usize {
        self.feature_width
    }

    fn predict_proba(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self.decision(fm)?.into_iter().map(sigmoid).collect())
    }
}

/// Exhaustive weighted stump fit: every feature, every midpoint threshold,
/// both polarities. Ties resolve to the first candidate in scan order.
fn fit_stump(fm: &FeatureMatrix, weights: &[f64]) -> (DecisionStump, f64) {
    let n = fm.n();
    let total_pos: f64 = weights
        .iter()
        .zip(&fm.labels)
        .filter(|(_, &l)| l == 1)
        .map(|(w, _)| w)
        .sum();
    let total: f64 = weights.iter().sum();

    let mut best = DecisionStump {
        feature: 0,
        threshold: f64::NEG_INFINITY,
        left_class: 0,
    };
    // The all-right stump predicts class 1 everywhere: error = weight of 0s.
    let mut best_err = total - total_pos;
    if total_pos < best_err {
        best.left_class = 1;
        best_err = total_pos;
    }

    let mut order: Vec<usize> = (0..n).collect();
    for f in 0..fm.f() {
        order.sort_by(|&a, &b| fm.values[[a, f]].partial_cmp(&fm.values[[b, f]]).unwrap());
        // left_pos / left_neg = weights of each class at or left of the cut.
        let mut left_pos = 0.0f64;
        let mut left_neg = 0.0f64;
        for (i, &row) in order.iter().enumerate() {
            if fm.labels[row] == 1 {
                left_pos += weights[row];
            } else {
                left_neg += weights[row];
            }
            if i + 1 == n || fm.values[[row, f]] == fm.values[[order[i + 1], f]] {
                continue;
            }
            let threshold = (fm.values[[row, f]] + fm.values[[order[i + 1], f]]) / 2.0;
            // left predicts 1: errors are left 0s plus right 1s.
            let err_left1 = left_neg + (total_pos - left_pos);
            // left predicts 0: the complement.
            let err_left0 = total - err_left1;
            for (err, left_class) in [(err_left1, 1u8), (err_left0, 0u8)] {
                if err < best_err - 1e-15 {
                    best_err = err;
                    best = DecisionStump {
                        feature: f,
                        threshold,
                        left_class,
                    };
                }
            }
        }
    }
    (best, best_err / total)
}

/// SAMME reweighting: stage weight alpha = lr * ln((1 - err) / err); sample
/// weights on misclassified rows grow by exp(alpha). Stops early when a
/// stage reaches zero weighted error or fails to beat chance; a degenerate
/// first learner aborts the fit.
pub fn fit_adaboost(
    fm: &FeatureMatrix,
    n_estimators: usize,
    learning_rate: f64,
) -> Result<AdaBoostModel> {
    if n_estimators == 0 {
        return Err(Error::invalid("n_estimators must be at least 1"));
    }
    if learning_rate <= 0.0 {
        return Err(Error::invalid("learning_rate must be positive"));
    }
    let pos = fm.labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == fm.labels.len() {
        return Err(Error::invalid("training data must contain both classes"));
    }

    let n = fm.n();
    let mut weights = vec![1.0 / n as f64; n];
    let mut model = AdaBoostModel {
        stumps: Vec::new(),
        n_estimators,
        learning_rate,
        staged_training_error: Vec::new(),
        feature_width: fm.f(),
    };

    for stage in 0..n_estimators {
        let (stump, err) = fit_stump(fm, &weights);
        if err >= 0.5 {
            if stage == 0 {
                return Err(Error::DegenerateWeakLearner { stage, error: err });
            }
            break;
        }
        let clamped = err.clamp(1e-12, 1.0 - 1e-12);
        let alpha = learning_rate * ((1.0 - clamped) / clamped).ln();
        model.stumps.push((stump, alpha));

        // Ensemble training error after this stage.
        let decisions = model.decision(fm)?;
        let wrong = decisions
            .iter()
            .zip(&fm.labels)
            .filter(|(&d, &l)| u8::from(d >= 0.0) != l)
            .count();
        model.staged_training_error.push(wrong as f64 / n as f64);

        if err <= 1e-12 {
            break;
        }

        let mut sum = 0.0;
        for (i, w) in weights.iter_mut().enumerate() {
            let miss = stump.predict_row(fm.values.row(i).as_slice().unwrap()) != fm.labels[i];
            if miss {
                *w *= alpha.exp();
            }
            sum += *w;
        }
        for w in &mut weights {
            *w /= sum;
        }
    }

    Ok(model)
}
