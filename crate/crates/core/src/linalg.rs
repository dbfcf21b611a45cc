//! Dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `Xᵀ diag(w) X`.
pub fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (mut row, &wi) in xw.row_iter_mut().zip(w.iter()) {
        row *= wi;
    }
    xw.tr_mul(x)
}

/// Solve the symmetric positive definite system `a·z = b`.
///
/// On failure the columns of `x` that are (numerically) linearly dependent
/// under weights `w` are reported.
pub fn spd_solve(
    a: DMatrix<f64>,
    b: &DVector<f64>,
    x: &DMatrix<f64>,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    let scale = a.diagonal().amax().max(f64::MIN_POSITIVE);
    if let Some(chol) = a.cholesky() {
        let pivot = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |m, &v| m.min(v));
        if pivot * pivot > scale * 1e-13 {
            let z = chol.solve(b);
            if z.iter().all(|v| v.is_finite()) {
                return Ok(z);
            }
        }
    }
    let columns = dependent_columns(x, w);
    if columns.is_empty() {
        return Err(Error::Numeric("weighted Gram matrix is numerically singular".into()));
    }
    Err(Error::RankDeficient { columns })
}

/// Solve a general square system by LU; `None` when singular.
pub fn lu_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let z = a.lu().solve(b)?;
    z.iter().all(|v| v.is_finite()).then_some(z)
}

/// Inverse of a general square matrix; `None` when singular.
pub fn inverse(a: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = a.try_inverse()?;
    inv.iter().all(|v| v.is_finite()).then_some(inv)
}

/// Columns of `diag(√w)·X` that lie (numerically) in the span of the columns
/// preceding them, found by modified Gram-Schmidt.
pub fn dependent_columns(x: &DMatrix<f64>, w: &DVector<f64>) -> Vec<usize> {
    let sw = w.map(|v| v.max(0.0).sqrt());
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let mut v = x.column(j).component_mul(&sw);
        let norm0 = v.norm();
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= 1e-10 * norm0 {
            dependent.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

/// Symmetrize in place: `(A + Aᵀ)/2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

pub(crate) fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
