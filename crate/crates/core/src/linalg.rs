//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    a.is_square() && (a - a.transpose()).iter().all(|v| v.abs() <= tol)
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

/// Least-squares view of a (possibly rank deficient) linear map.
///
/// Holds a particular minimum-norm solution of `m x ≈ rhs` and an orthonormal
/// basis of the null space of `m`.
pub(crate) struct LeastSquares {
    pub solution: DVector<f64>,
    pub null_basis: DMatrix<f64>,
    pub rank: usize,
}

/// Minimum-norm least-squares solve plus null space, via SVD.
///
/// Singular values at or below `rel_tol * max(σ_max, 1)` are treated as zero.
pub(crate) fn least_squares(m: &DMatrix<f64>, rhs: &DVector<f64>, rel_tol: f64) -> LeastSquares {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return LeastSquares {
            solution: DVector::zeros(0),
            null_basis: DMatrix::zeros(0, 0),
            rank: 0,
        };
    }
    // Pad wide systems with zero rows so the SVD yields a complete V.
    let (work, rhs_work) = if rows < cols {
        let mut padded = DMatrix::zeros(cols, cols);
        padded.rows_mut(0, rows).copy_from(m);
        let mut r = DVector::zeros(cols);
        r.rows_mut(0, rows).copy_from(rhs);
        (padded, r)
    } else {
        (m.clone(), rhs.clone())
    };
    let svd = work.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().fold(0.0_f64, |a, &s| a.max(s));
    let tol = rel_tol * sigma_max.max(1.0);

    let mut solution = DVector::zeros(cols);
    let mut null_cols = Vec::new();
    let mut rank = 0;
    for (idx, &s) in sigma.iter().enumerate() {
        if s > tol {
            rank += 1;
            let coeff = u.column(idx).dot(&rhs_work) / s;
            solution += v_t.row(idx).transpose() * coeff;
        } else {
            null_cols.push(idx);
        }
    }
    // V^T is square (cols x cols) here, so singular vectors beyond the
    // returned singular values cannot occur; every zero direction is listed.
    let mut null_basis = DMatrix::zeros(cols, null_cols.len());
    for (c, &idx) in null_cols.iter().enumerate() {
        null_basis.set_column(c, &v_t.row(idx).transpose());
    }
    LeastSquares {
        solution,
        null_basis,
        rank,
    }
}

/// Solves a symmetric positive semidefinite system, falling back to the
/// pseudo-inverse when Cholesky fails. Returns the solution and whether the
/// fallback was used.
pub(crate) fn solve_psd(h: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, bool) {
    if h.nrows() == 0 {
        return (DVector::zeros(0), false);
    }
    if let Some(chol) = h.clone().cholesky() {
        return (chol.solve(rhs), false);
    }
    (least_squares(h, rhs, 1e-12).solution, true)
}

/// Text form used by every CSV export: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
