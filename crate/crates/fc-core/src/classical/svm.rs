//! RBF-kernel SVM trained by sequential minimal optimization on the dual,
//! with maximal-violating-pair working-set selection.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{check_width, sigmoid, signed_labels, Classifier};
use crate::connectivity::FeatureMatrix;
use crate::error::{Error, Result};

/// exp(-gamma ||a - b||^2)
pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let mut d2 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        d2 += d * d;
    }
    (-gamma * d2).exp()
}

/// Support vectors with their signed dual coefficients alpha_i * y_i.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSvmModel {
    pub support_vectors: Array2<f64>,
    pub dual_coeffs: Array1<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c_reg: f64,
}

impl KernelSvmModel {
    /// Decision value sum_i alpha_i y_i K(sv_i, x) + b.
    pub fn decision(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        check_width(self.feature_width(), fm)?;
        Ok(fm
            .values
            .rows()
            .into_iter()
            .map(|row| {
                let x = row.as_slice().unwrap();
                let mut d = self.bias;
                for (sv, &coef) in self
                    .support_vectors
                    .rows()
                    .into_iter()
                    .zip(&self.dual_coeffs)
                {
                    d += coef * rbf_kernel(sv.as_slice().unwrap(), x, self.gamma);
                }
                d
            })
            .collect())
    }
}

impl Classifier for KernelSvmModel {
    fn feature_width(&self) -> usize {
        self.support_vectors.ncols()
    }

    fn predict_proba(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        // Fixed logistic link on the decision value: a monotone score is all
        // AUC needs, and sign(decision) survives the 0.5 threshold.
        Ok(self.decision(fm)?.into_iter().map(sigmoid).collect())
    }
}

/// Heuristic default gamma = 1 / (F * mean feature variance).
pub fn default_gamma(fm: &FeatureMatrix) -> f64 {
    let n = fm.n() as f64;
    let mut var_sum = 0.0;
    for col in fm.values.columns() {
        let mean = col.sum() / n;
        var_sum += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    }
    let mean_var = var_sum / fm.f() as f64;
    if mean_var <= 1e-300 {
        1.0
    } else {
        1.0 / (fm.f() as f64 * mean_var)
    }
}

/// Solve the C-SVM dual by SMO: repeatedly pick the maximal violating pair
/// (Keerthi's m(alpha) > M(alpha) criterion), solve the two-variable
/// subproblem analytically, and stop when the KKT gap falls below `tol`
/// (1e-3 by default at the public entry point).
pub fn fit_kernel_svm(fm: &FeatureMatrix, c_reg: f64, gamma: f64) -> Result<KernelSvmModel> {
    fit_kernel_svm_with_tol(fm, c_reg, gamma, 1e-3)
}

pub fn fit_kernel_svm_with_tol(
    fm: &FeatureMatrix,
    c_reg: f64,
    gamma: f64,
    tol: f64,
) -> Result<KernelSvmModel> {
    let (alpha, bias, _) = smo_solve(fm, c_reg, gamma, tol)?;
    let n = fm.n();
    let y = signed_labels(&fm.labels);

    let support: Vec<usize> = (0..n).filter(|&i| alpha[i] > 1e-10).collect();
    if support.is_empty() {
        return Err(Error::invalid(
            "no support vectors after fit; increase c_reg",
        ));
    }
    let support_vectors =
        Array2::from_shape_fn((support.len(), fm.f()), |(s, j)| fm.values[[support[s], j]]);
    let dual_coeffs = Array1::from_iter(support.iter().map(|&i| alpha[i] * y[i]));

    Ok(KernelSvmModel {
        support_vectors,
        dual_coeffs,
        bias,
        gamma,
        c_reg,
    })
}

/// Precomputed RBF kernel matrix over the rows of `fm`.
pub fn kernel_matrix(fm: &FeatureMatrix, gamma: f64) -> Array2<f64> {
    let n = fm.n();
    let mut k = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let xi = fm.values.row(i);
        let xi = xi.as_slice().unwrap();
        for j in i..n {
            let v = rbf_kernel(xi, fm.values.row(j).as_slice().unwrap(), gamma);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

fn smo_solve(
    fm: &FeatureMatrix,
    c_reg: f64,
    gamma: f64,
    tol: f64,
) -> Result<(Vec<f64>, f64, Array2<f64>)> {
    let pos = fm.labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == fm.labels.len() {
        return Err(Error::invalid("training data must contain both classes"));
    }
    if c_reg <= 0.0 || gamma <= 0.0 {
        return Err(Error::invalid("c_reg and gamma must be positive"));
    }

    let n = fm.n();
    let y = signed_labels(&fm.labels);
    // Dense kernel matrix; cohort sizes here are small enough to afford it.
    let k = kernel_matrix(fm, gamma);

    let c = c_reg;
    let mut alpha = vec![0.0f64; n];
    // g_i = sum_j alpha_j y_j K_ij (bias-free decision value).
    let mut g = vec![0.0f64; n];

    let max_iter = 100_000.max(100 * n);
    let mut converged = false;
    let mut bias = 0.0;

    for _ in 0..max_iter {
        // Maximal violating pair over I_up and I_low.
        let mut i_up = usize::MAX;
        let mut m_up = f64::NEG_INFINITY;
        let mut j_low = usize::MAX;
        let mut m_low = f64::INFINITY;
        for t in 0..n {
            let v = y[t] - g[t];
            let in_up = (y[t] > 0.0 && alpha[t] < c - 1e-12) || (y[t] < 0.0 && alpha[t] > 1e-12);
            let in_low = (y[t] < 0.0 && alpha[t] < c - 1e-12) || (y[t] > 0.0 && alpha[t] > 1e-12);
            if in_up && v > m_up {
                m_up = v;
                i_up = t;
            }
            if in_low && v < m_low {
                m_low = v;
                j_low = t;
            }
        }
        if i_up == usize::MAX || j_low == usize::MAX || m_up - m_low <= tol {
            bias = if i_up != usize::MAX && j_low != usize::MAX {
                (m_up + m_low) / 2.0
            } else {
                0.0
            };
            converged = true;
            break;
        }

        let (i, j) = (i_up, j_low);
        let eta = k[[i, i]] + k[[j, j]] - 2.0 * k[[i, j]];
        let eta = eta.max(1e-12);

        // Platt's clipped two-variable update in terms of E = g - y.
        let e_i = g[i] - y[i];
        let e_j = g[j] - y[j];
        let (lo, hi) = if (y[i] - y[j]).abs() > 1e-12 {
            (
                (alpha[j] - alpha[i]).max(0.0),
                (c + alpha[j] - alpha[i]).min(c),
            )
        } else {
            (
                (alpha[i] + alpha[j] - c).max(0.0),
                (alpha[i] + alpha[j]).min(c),
            )
        };
        if hi - lo < 1e-14 {
            // Degenerate box; nudge alpha_j to its bound to make progress.
            continue;
        }
        let alpha_j_new = (alpha[j] + y[j] * (e_i - e_j) / eta).clamp(lo, hi);
        let alpha_i_new = alpha[i] + y[i] * y[j] * (alpha[j] - alpha_j_new);

        let di = (alpha_i_new - alpha[i]) * y[i];
        let dj = (alpha_j_new - alpha[j]) * y[j];
        alpha[i] = alpha_i_new;
        alpha[j] = alpha_j_new;
        for t in 0..n {
            g[t] += di * k[[i, t]] + dj * k[[j, t]];
        }
    }

    if !converged {
        return Err(Error::invalid(format!(
            "SMO did not reach KKT tolerance {tol} within the iteration cap"
        )));
    }
    Ok((alpha, bias, k))
}

/// Dual objective value sum(alpha) - 0.5 alpha^T Q alpha for a given model's
/// support expansion; used by tests to compare against a QP oracle.
pub fn dual_objective(alpha: &[f64], y: &[f64], k: &Array2<f64>) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[[i, j]];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Expose alpha in original row order (zeros off-support) plus the kernel
/// matrix and dual objective, for oracle comparisons.
pub fn fit_kernel_svm_dual_trace(
    fm: &FeatureMatrix,
    c_reg: f64,
    gamma: f64,
    tol: f64,
) -> Result<(Vec<f64>, Array2<f64>, f64)> {
    let (alpha, _, k) = smo_solve(fm, c_reg, gamma, tol)?;
    let y = signed_labels(&fm.labels);
    let obj = dual_objective(&alpha, &y, &k);
    Ok((alpha, k, obj))
}
