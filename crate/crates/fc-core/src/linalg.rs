//! Small dense linear-algebra kernels: cyclic Jacobi eigendecomposition for
//! symmetric matrices and Cholesky factorization for SPD matrices.
//!
//! Sizes in this crate stay modest (R <= a few hundred ROIs, Gram matrices up
//! to the cohort size), so the classic O(n^3) routines are plenty and avoid
//! an external LAPACK backend.

use ndarray::{Array1, Array2};

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
/// `vectors` holds the eigenvectors as columns, aligned with `values`.
pub struct SymEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
///
/// Jacobi is slower than tridiagonal QR but unconditionally accurate for
/// symmetric input: the eigenvector matrix is a product of plane rotations
/// and stays orthonormal to machine precision.
pub fn sym_eigen(a: &Array2<f64>) -> SymEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "sym_eigen expects a square matrix");
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);

    let fro: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * fro.max(1.0);

    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());

    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (out_col, &in_col) in order.iter().enumerate() {
        for k in 0..n {
            vectors[[k, out_col]] = v[[k, in_col]];
        }
    }
    SymEigen { values, vectors }
}

/// Lower-triangular Cholesky factor of an SPD matrix, or `None` if a pivot
/// is not strictly positive.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "cholesky expects a square matrix");
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let dj = d.sqrt();
        l[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / dj;
        }
    }
    Some(l)
}

/// Inverse of an SPD matrix from its Cholesky factor: A^-1 = L^-T L^-1.
pub fn spd_inverse(a: &Array2<f64>) -> Option<Array2<f64>> {
    let l = cholesky(a)?;
    let n = l.nrows();

    // Invert the lower-triangular factor by forward substitution.
    let mut linv = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        linv[[j, j]] = 1.0 / l[[j, j]];
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in j..i {
                s -= l[[i, k]] * linv[[k, j]];
            }
            linv[[i, j]] = s / l[[i, i]];
        }
    }

    let mut inv = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = 0.0;
            for k in i..n {
                s += linv[[k, i]] * linv[[k, j]];
            }
            inv[[i, j]] = s;
            inv[[j, i]] = s;
        }
    }
    Some(inv)
}
