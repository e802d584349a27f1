//! Penalized linear models: logistic regression by proximal gradient descent
//! and a linear SVM by deterministic primal subgradient descent.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{check_width, sigmoid, signed_labels, Classifier};
use crate::connectivity::FeatureMatrix;
use crate::error::{Error, Result};

/// Weight penalty. The elasticnet mixing weight is the L1 share.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Penalty {
    L1,
    L2,
    ElasticNet(f64),
}

impl Penalty {
    /// L1 share in [0, 1].
    fn l1_mix(&self) -> Result<f64> {
        match self {
            Penalty::L1 => Ok(1.0),
            Penalty::L2 => Ok(0.0),
            Penalty::ElasticNet(a) => {
                if !(0.0..=1.0).contains(a) {
                    return Err(Error::invalid("elasticnet mixing must lie in [0, 1]"));
                }
                Ok(*a)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    Logistic,
    Hinge,
}

/// Optimizer exit state; a non-converged fit still returns the model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Linear decision function sigma(w . x + b) with a penalty tag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub penalty: Penalty,
    /// Inverse regularization strength (larger = weaker penalty).
    pub c_reg: f64,
    pub loss: LossKind,
    pub convergence: Convergence,
}

impl Classifier for LinearModel {
    fn feature_width(&self) -> usize {
        self.weights.len()
    }

    fn predict_proba(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        check_width(self.feature_width(), fm)?;
        Ok(fm
            .values
            .rows()
            .into_iter()
            .map(|row| sigmoid(row.dot(&self.weights) + self.bias))
            .collect())
    }
}

impl LinearModel {
    /// Raw decision values w . x + b.
    pub fn decision(&self, fm: &FeatureMatrix) -> Result<Vec<f64>> {
        check_width(self.feature_width(), fm)?;
        Ok(fm
            .values
            .rows()
            .into_iter()
            .map(|row| row.dot(&self.weights) + self.bias)
            .collect())
    }
}

fn validate_two_classes(fm: &FeatureMatrix) -> Result<()> {
    let pos = fm.labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == fm.labels.len() {
        return Err(Error::invalid("training data must contain both classes"));
    }
    Ok(())
}

/// Largest squared singular value of [X | 1] by power iteration; used as a
/// Lipschitz bound for the logistic gradient.
fn spectral_bound(x: &Array2<f64>) -> f64 {
    let n = x.nrows();
    let f = x.ncols();
    let mut v = Array1::<f64>::from_elem(f + 1, 1.0 / ((f + 1) as f64).sqrt());
    let mut sigma2 = 0.0;
    for _ in 0..40 {
        // u = [X | 1] v
        let mut u = Array1::<f64>::zeros(n);
        for i in 0..n {
            u[i] = x.row(i).dot(&v.slice(ndarray::s![..f])) + v[f];
        }
        // w = [X | 1]^T u
        let mut w = Array1::<f64>::zeros(f + 1);
        for i in 0..n {
            let ui = u[i];
            for j in 0..f {
                w[j] += x[[i, j]] * ui;
            }
            w[f] += ui;
        }
        let norm = w.dot(&w).sqrt();
        if norm <= 1e-300 {
            return 1.0;
        }
        sigma2 = norm;
        v = w / norm;
    }
    sigma2.max(1e-12)
}

struct LogisticProblem<'a> {
    x: &'a Array2<f64>,
    y: Vec<f64>,
    /// L2 weight in the objective: (1 - l1_mix) / (c N).
    l2: f64,
    /// L1 weight handled by the proximal step: l1_mix / (c N).
    l1: f64,
}

impl LogisticProblem<'_> {
    fn smooth_loss(&self, w: &Array1<f64>, b: f64) -> f64 {
        let n = self.x.nrows() as f64;
        let mut loss = 0.0;
        for (row, &yi) in self.x.rows().into_iter().zip(&self.y) {
            let z = yi * (row.dot(w) + b);
            // ln(1 + exp(-z)) without overflow.
            loss += if z > 0.0 {
                (-z).exp().ln_1p()
            } else {
                -z + z.exp().ln_1p()
            };
        }
        loss / n + 0.5 * self.l2 * w.dot(w)
    }

    fn full_loss(&self, w: &Array1<f64>, b: f64) -> f64 {
        self.smooth_loss(w, b) + self.l1 * w.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn smooth_grad(&self, w: &Array1<f64>, b: f64) -> (Array1<f64>, f64) {
        let n = self.x.nrows() as f64;
        let mut gw = Array1::<f64>::zeros(w.len());
        let mut gb = 0.0;
        for (row, &yi) in self.x.rows().into_iter().zip(&self.y) {
            let z = yi * (row.dot(w) + b);
            let coeff = -yi * sigmoid(-z) / n;
            gw.scaled_add(coeff, &row);
            gb += coeff;
        }
        gw.scaled_add(self.l2, w);
        (gw, gb)
    }
}

/// The exact objective [`fit_logistic`] minimizes: mean logistic loss plus
/// the scaled penalty. Public so independent optimizers can be compared
/// against a fit on equal terms.
pub fn logistic_objective(
    fm: &FeatureMatrix,
    weights: &Array1<f64>,
    bias: f64,
    penalty: Penalty,
    c_reg: f64,
) -> Result<f64> {
    let l1_mix = penalty.l1_mix()?;
    let n = fm.n() as f64;
    let problem = LogisticProblem {
        x: &fm.values,
        y: signed_labels(&fm.labels),
        l2: (1.0 - l1_mix) / (c_reg * n),
        l1: l1_mix / (c_reg * n),
    };
    Ok(problem.full_loss(weights, bias))
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Minimize the penalized mean logistic loss with proximal gradient descent
/// and backtracking. L1 mass goes through soft-thresholding, so lasso-style
/// zeros are exact. A fit that exhausts the iteration cap is still returned,
/// with the residual gradient-mapping norm recorded in `convergence`.
pub fn fit_logistic(fm: &FeatureMatrix, penalty: Penalty, c_reg: f64) -> Result<LinearModel> {
    validate_two_classes(fm)?;
    if c_reg <= 0.0 {
        return Err(Error::invalid("c_reg must be positive"));
    }
    let l1_mix = penalty.l1_mix()?;
    let n = fm.n() as f64;
    let problem = LogisticProblem {
        x: &fm.values,
        y: signed_labels(&fm.labels),
        l2: (1.0 - l1_mix) / (c_reg * n),
        l1: l1_mix / (c_reg * n),
    };

    let mut w = Array1::<f64>::zeros(fm.f());
    let mut b = 0.0f64;
    let mut lip = 0.25 * spectral_bound(&fm.values) / n + problem.l2;

    let tol = 1e-6;
    let max_iter = 50_000;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;

    for it in 0..max_iter {
        iterations = it + 1;
        let (gw, gb) = problem.smooth_grad(&w, b);
        let f0 = problem.smooth_loss(&w, b);

        // Backtracking on the quadratic upper bound.
        let (mut w_next, mut b_next);
        loop {
            let step = 1.0 / lip;
            w_next = &w - &(&gw * step);
            w_next.mapv_inplace(|v| soft_threshold(v, step * problem.l1));
            b_next = b - step * gb;

            let dw = &w_next - &w;
            let db = b_next - b;
            let quad = f0 + gw.dot(&dw) + gb * db + 0.5 * lip * (dw.dot(&dw) + db * db);
            if problem.smooth_loss(&w_next, b_next) <= quad + 1e-15 {
                break;
            }
            lip *= 2.0;
            if lip > 1e18 {
                break;
            }
        }

        // Gradient-mapping norm: the proximal analogue of the gradient.
        let step = 1.0 / lip;
        let dw = (&w - &w_next) / step;
        let db = (b - b_next) / step;
        grad_norm = (dw.dot(&dw) + db * db).sqrt();

        w = w_next;
        b = b_next;
        if grad_norm <= tol {
            break;
        }
        lip = (lip * 0.9).max(1e-12);
    }

    Ok(LinearModel {
        weights: w,
        bias: b,
        penalty,
        c_reg,
        loss: LossKind::Logistic,
        convergence: Convergence {
            converged: grad_norm <= tol,
            grad_norm,
            iterations,
        },
    })
}

/// Primal L2-regularized hinge loss by deterministic full-batch subgradient
/// descent with a 1/(lambda t) step and tail averaging.
pub fn fit_linear_svm(fm: &FeatureMatrix, c_reg: f64) -> Result<LinearModel> {
    validate_two_classes(fm)?;
    if c_reg <= 0.0 {
        return Err(Error::invalid("c_reg must be positive"));
    }
    let n = fm.n() as f64;
    let y = signed_labels(&fm.labels);
    let lambda = 1.0 / (c_reg * n);

    let mut w = Array1::<f64>::zeros(fm.f());
    let mut b = 0.0f64;
    let mut w_avg = Array1::<f64>::zeros(fm.f());
    let mut b_avg = 0.0f64;

    let total = 4000usize;
    let tail_from = total / 2;
    for t in 0..total {
        let mut gw = w.clone() * lambda;
        let mut gb = 0.0;
        for (row, &yi) in fm.values.rows().into_iter().zip(&y) {
            let margin = yi * (row.dot(&w) + b);
            if margin < 1.0 {
                gw.scaled_add(-yi / n, &row);
                gb += -yi / n;
            }
        }
        let eta = 1.0 / (lambda * (t as f64 + 2.0));
        w.scaled_add(-eta, &gw);
        b -= eta * gb;
        if t >= tail_from {
            let k = (t - tail_from + 1) as f64;
            w_avg = &w_avg * ((k - 1.0) / k) + &(&w * (1.0 / k));
            b_avg = b_avg * ((k - 1.0) / k) + b / k;
        }
    }

    // Final subgradient norm on the averaged iterate, for the record.
    let mut gw = w_avg.clone() * lambda;
    let mut gb = 0.0;
    for (row, &yi) in fm.values.rows().into_iter().zip(&y) {
        if yi * (row.dot(&w_avg) + b_avg) < 1.0 {
            gw.scaled_add(-yi / n, &row);
            gb += -yi / n;
        }
    }
    let grad_norm = (gw.dot(&gw) + gb * gb).sqrt();

    Ok(LinearModel {
        weights: w_avg,
        bias: b_avg,
        penalty: Penalty::L2,
        c_reg,
        loss: LossKind::Hinge,
        convergence: Convergence {
            converged: true,
            grad_norm,
            iterations: total,
        },
    })
}
