//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold below which a QR pivot is treated as zero.
const RANK_TOL: f64 = 1e-10;

/// Least-squares fit of every column of `y` on the common regressors `x`.
pub(crate) struct LeastSquares {
    /// Coefficients, one column per response.
    pub coef: DMatrix<f64>,
    /// `(X'X)^{-1}`.
    pub xtx_inv: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
}

/// Solves `min ||Y - X B||` column by column through a Householder QR of `x`.
///
/// `names` labels the columns of `x` so a collinear regressor can be reported.
pub(crate) fn least_squares(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    names: &[String],
) -> Result<LeastSquares> {
    let (n, m) = x.shape();
    if n < m {
        return Err(Error::InsufficientData {
            what: "least squares",
            needed: m,
            got: n,
        });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..m {
        let col_norm = x.column(j).norm();
        if col_norm == 0.0 || r[(j, j)].abs() <= RANK_TOL * col_norm {
            let column = names
                .get(j)
                .cloned()
                .unwrap_or_else(|| format!("#{j}"));
            return Err(Error::RankDeficient { column });
        }
    }
    let qty = qr.q().transpose() * y;
    let qty = qty.rows(0, m).into_owned();
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Solver("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(m, m))
        .ok_or_else(|| Error::Solver("triangular inverse failed".into()))?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let residuals = y - x * &coef;
    Ok(LeastSquares {
        coef,
        xtx_inv,
        residuals,
    })
}

/// Minimum-norm least-squares solution via SVD; tolerates rank deficiency.
pub(crate) fn min_norm_least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    svd.solve(y, eps)
        .map_err(|e| Error::Solver(format!("minimum-norm least squares: {e}")))
}

/// Inverse of a symmetric positive-definite matrix.
pub(crate) fn spd_inverse(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    match a.clone().cholesky() {
        Some(ch) => Ok(ch.inverse()),
        None => Err(Error::Singular {
            context: context.to_string(),
            condition: condition_number(a),
        }),
    }
}

/// 2-norm condition number from the singular values.
pub(crate) fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let smin = sv.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / smin
    }
}

/// Linear-interpolation sample quantile (Hyndman-Fan type 7) of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    if frac == 0.0 || sorted[lo] == sorted[hi] {
        return sorted[lo];
    }
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub(crate) fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}
