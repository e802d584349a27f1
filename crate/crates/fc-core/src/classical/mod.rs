//! From-scratch non-recurrent classifiers (logistic regression, linear and
//! RBF-kernel SVMs, random forest, AdaBoost) and the RFE / SelectFromModel
//! feature-selection wrappers.

mod adaboost;
mod forest;
mod linear;
mod select;
mod svm;

pub use adaboost::{fit_adaboost, AdaBoostModel, DecisionStump};
pub use forest::{fit_random_forest, ForestModel, SplitCriterion};
pub use linear::logistic_objective;
pub use linear::{fit_linear_svm, fit_logistic, Convergence, LinearModel, LossKind, Penalty};
pub use select::{rfe_select, select_from_model, SfmThreshold};
pub use svm::{
    default_gamma, dual_objective, fit_kernel_svm, fit_kernel_svm_dual_trace,
    fit_kernel_svm_with_tol, kernel_matrix, rbf_kernel, KernelSvmModel,
};

use crate::connectivity::FeatureMatrix;
use crate::error::{Error, Result};

/// Uniform prediction surface over every model kind: P(label = 1) scores and
/// thresholded labels.
pub trait Classifier {
    fn feature_width(&self) -> usize;

    /// Probability of the positive class per row, in [0, 1].
    fn predict_proba(&self, fm: &FeatureMatrix) -> Result<Vec<f64>>;

    /// Binary labels from thresholded probabilities (p >= threshold -> 1).
    fn predict(&self, fm: &FeatureMatrix, threshold: f64) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(fm)?
            .iter()
            .map(|&p| u8::from(p >= threshold))
            .collect())
    }
}

pub(crate) fn check_width(expected: usize, fm: &FeatureMatrix) -> Result<()> {
    if fm.f() != expected {
        return Err(Error::DimensionMismatch(format!(
            "model expects {expected} features, matrix has {}",
            fm.f()
        )));
    }
    Ok(())
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Labels as -1/+1 for margin-based losses.
pub(crate) fn signed_labels(labels: &[u8]) -> Vec<f64> {
    labels
        .iter()
        .map(|&l| if l == 1 { 1.0 } else { -1.0 })
        .collect()
}
