//! Feature-selection wrappers: recursive feature elimination and
//! SelectFromModel thresholding of linear-model coefficients.

use serde::{Deserialize, Serialize};

use super::LinearModel;
use crate::connectivity::FeatureMatrix;
use crate::error::{Error, Result};

/// Recursive feature elimination: refit, drop the single least-important
/// feature, repeat until `target_count` remain. `fit_importance` receives
/// the surviving columns and returns one nonnegative importance per column
/// (|weight| for linear models, impurity importance for forests).
///
/// Returns surviving indices into the original feature order, ascending.
pub fn rfe_select<F>(
    fm: &FeatureMatrix,
    target_count: usize,
    mut fit_importance: F,
) -> Result<Vec<usize>>
where
    F: FnMut(&FeatureMatrix) -> Result<Vec<f64>>,
{
    if target_count == 0 || target_count >= fm.f() {
        return Err(Error::invalid(format!(
            "target_count must lie in 1..{} (got {target_count})",
            fm.f()
        )));
    }
    let mut active: Vec<usize> = (0..fm.f()).collect();
    while active.len() > target_count {
        let sub = fm.subset_columns(&active);
        let importances = fit_importance(&sub)?;
        if importances.len() != active.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} importances for {} active features",
                importances.len(),
                active.len()
            )));
        }
        let mut drop = 0;
        for (i, v) in importances.iter().enumerate() {
            if *v < importances[drop] {
                drop = i;
            }
        }
        active.remove(drop);
    }
    Ok(active)
}

/// SelectFromModel threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SfmThreshold {
    /// Mean of |weights| (the default).
    Mean,
    Value(f64),
}

/// Keep the features whose fitted |weight| reaches the threshold.
pub fn select_from_model(model: &LinearModel, threshold: SfmThreshold) -> Result<Vec<usize>> {
    let magnitudes: Vec<f64> = model.weights.iter().map(|w| w.abs()).collect();
    let cut = match threshold {
        SfmThreshold::Mean => magnitudes.iter().sum::<f64>() / magnitudes.len() as f64,
        SfmThreshold::Value(v) => v,
    };
    let kept: Vec<usize> = magnitudes
        .iter()
        .enumerate()
        .filter(|(_, &m)| m >= cut)
        .map(|(i, _)| i)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptySelection { threshold: cut });
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{Convergence, LossKind, Penalty};
    use crate::connectivity::Provenance;
    use ndarray::{Array1, Array2};
    use std::cell::Cell;

    fn fm_with_f(f: usize) -> FeatureMatrix {
        let values = Array2::from_shape_fn((6, f), |(i, j)| (i * f + j) as f64 * 0.1);
        let labels = vec![0, 1, 0, 1, 0, 1];
        let names = (0..f).map(|i| format!("f{i}")).collect();
        FeatureMatrix::new(values, labels, names, Provenance::External).unwrap()
    }

    fn linear_with_weights(w: &[f64]) -> LinearModel {
        LinearModel {
            weights: Array1::from_vec(w.to_vec()),
            bias: 0.0,
            penalty: Penalty::L2,
            c_reg: 1.0,
            loss: LossKind::Logistic,
            convergence: Convergence {
                converged: true,
                grad_norm: 0.0,
                iterations: 1,
            },
        }
    }

    #[test]
    fn rfe_performs_one_refit_per_drop() {
        let fm = fm_with_f(4);
        let fits = Cell::new(0usize);
        let selected = rfe_select(&fm, 2, |sub| {
            fits.set(fits.get() + 1);
            // Importance = original-ish position: drop lowest first.
            Ok((0..sub.f()).map(|i| i as f64 + 1.0).collect())
        })
        .unwrap();
        assert_eq!(fits.get(), 2, "F=4 -> target 2 must refit exactly twice");
        assert_eq!(selected, vec![2, 3]);
    }

    #[test]
    fn rfe_single_step_drops_least_important() {
        let fm = fm_with_f(5);
        let selected = rfe_select(&fm, 4, |sub| {
            let mut imp: Vec<f64> = (0..sub.f()).map(|i| 10.0 - i as f64).collect();
            imp[2] = 0.5; // planted minimum
            Ok(imp)
        })
        .unwrap();
        assert_eq!(selected, vec![0, 1, 3, 4]);
    }

    #[test]
    fn sfm_mean_threshold_arithmetic() {
        let model = linear_with_weights(&[3.0, 0.1, 2.9]);
        // mean |w| = 2.0 exactly
        let kept = select_from_model(&model, SfmThreshold::Mean).unwrap();
        assert_eq!(kept, vec![0, 2]);
    }

    #[test]
    fn sfm_equal_weights_keeps_all() {
        let model = linear_with_weights(&[-1.5, 1.5, 1.5, -1.5]);
        let kept = select_from_model(&model, SfmThreshold::Mean).unwrap();
        assert_eq!(kept, vec![0, 1, 2, 3]);
    }

    #[test]
    fn sfm_empty_selection_is_an_error() {
        let model = linear_with_weights(&[0.1, 0.2]);
        let err = select_from_model(&model, SfmThreshold::Value(10.0)).unwrap_err();
        assert!(matches!(err, Error::EmptySelection { .. }));
    }
}
