//! Dense symmetric positive-definite kernels shared by the distribution,
//! covariance, and prediction code. The factorization is written out by
//! hand so a failure can report *which* pivot went nonpositive — that index
//! is the diagnostic users need when a covariance matrix degenerates.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Lower Cholesky factor of a symmetric positive-definite matrix.
///
/// Only the lower triangle of `a` is read.
pub(crate) fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    Ok(l)
}

/// Solve L y = b with L lower triangular.
pub(crate) fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut y = b.clone();
    l.solve_lower_triangular_mut(&mut y);
    y
}

/// Solve L' x = y.
pub(crate) fn solve_lower_transpose(l: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut x = y.clone();
    l.tr_solve_lower_triangular_mut(&mut x);
    x
}

/// Solve (L L') x = b.
pub(crate) fn chol_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    solve_lower_transpose(l, &solve_lower(l, b))
}

/// ln det(L L') = 2 Σ ln L_jj.
pub(crate) fn log_det(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|j| l[(j, j)].ln()).sum::<f64>()
}
