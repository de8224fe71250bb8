//! Dense linear-algebra helpers shared by the estimator and attack modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_TOL: f64 = 1e-9;

/// Gain matrices with a condition number above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Full SVD of `m`, padded with zero rows when it is wide so that `V` spans
/// the whole column space. Returns singular values (descending, length =
/// ncols) and `V` (ncols x ncols).
fn full_right_svd(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let k = m.ncols();
    if k == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let padded = if m.nrows() < k {
        let mut p = DMatrix::zeros(k, k);
        p.view_mut((0, 0), (m.nrows(), k)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    (svd.singular_values, v_t.transpose())
}

fn rank_from_singular_values(sv: &DVector<f64>) -> usize {
    let largest = sv.iter().copied().fold(0.0_f64, f64::max);
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * largest).count()
}

/// Numerical rank with the relative tolerance [`RANK_TOL`].
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    rank_from_singular_values(&m.singular_values())
}

/// Orthonormal basis of the null space of `m`, one vector per column.
/// Columns are ordered from the smallest singular value upwards.
pub fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.ncols();
    let (sv, v) = full_right_svd(m);
    let rank = if m.nrows() == 0 { 0 } else { rank_from_singular_values(&sv) };
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]).then(b.cmp(&a)));
    let null_dim = k - rank;
    DMatrix::from_fn(k, null_dim, |r, c| v[(r, order[c])])
}

/// Norm of the component of `a` orthogonal to the column space of `h`.
pub fn column_space_residual(h: &DMatrix<f64>, a: &DVector<f64>) -> f64 {
    if h.ncols() == 0 || h.nrows() == 0 {
        return a.norm();
    }
    let svd = h.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let sv = &svd.singular_values;
    let cutoff = RANK_TOL * sv.iter().copied().fold(0.0_f64, f64::max);
    let mut projection = DVector::zeros(a.len());
    for (j, col) in u.column_iter().enumerate() {
        if sv[j] > cutoff {
            projection += col * col.dot(a);
        }
    }
    (a - projection).norm()
}

/// Factorizes a symmetric positive-definite gain matrix, rejecting it when it
/// is singular or its condition number exceeds [`MAX_CONDITION`].
pub fn factor_gain(gain: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if gain.nrows() > 0 {
        let eig = SymmetricEigen::new(gain.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min <= 0.0 || !min.is_finite() || max / min > MAX_CONDITION {
            return Err(Error::UnobservableNetwork(format!(
                "gain matrix condition estimate {:.3e} exceeds {MAX_CONDITION:e}",
                if min > 0.0 { max / min } else { f64::INFINITY }
            )));
        }
    }
    Cholesky::new(gain).ok_or_else(|| Error::UnobservableNetwork("gain matrix is not positive definite".into()))
}

/// Rows of `m` selected by `rows`, in the given order.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}
