//! Normal equations of the stacked system, solved in `O(T)` block operations.
//!
//! The coefficient block `M = D'D + lam^2 W'W` is block tridiagonal with
//! constant off-diagonal blocks `-lam^2 I`; its block Cholesky factor only
//! needs the Schur complements `S_{t+1} = D_{t+1} - lam^4 S_t^{-1}`. The
//! shared intercept borders `M` and is eliminated through a `k x k` Schur
//! complement.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::system::{AnchorMode, StackedSystem};
use crate::error::{Error, Result};

pub(crate) struct BlockTridiagonal {
    /// Cholesky factors of the Schur complements `S_t`.
    factors: Vec<Cholesky<f64, Dyn>>,
    lambda2: f64,
    /// Smallest / largest squared pivot seen, a cheap conditioning estimate.
    pivot_range: (f64, f64),
}

impl BlockTridiagonal {
    /// Factors the tridiagonal matrix with diagonal blocks `diag[t]` and
    /// off-diagonal blocks `-lambda2 I`.
    pub(crate) fn factor(diag: Vec<DMatrix<f64>>, lambda2: f64) -> Result<Self> {
        let mut factors: Vec<Cholesky<f64, Dyn>> = Vec::with_capacity(diag.len());
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        let lambda4 = lambda2 * lambda2;
        for (t, mut s) in diag.into_iter().enumerate() {
            if let Some(prev) = factors.last() {
                s -= prev.inverse() * lambda4;
                s = (&s + s.transpose()) * 0.5;
            }
            let chol = s.clone().cholesky().ok_or_else(|| Error::Singular {
                context: format!("normal equations lose positive definiteness at period {}", t + 1),
                condition: crate::linalg::condition_number(&s),
            })?;
            for d in chol.l_dirty().diagonal().iter() {
                let d2 = d * d;
                lo = lo.min(d2);
                hi = hi.max(d2);
            }
            factors.push(chol);
        }
        Ok(Self {
            factors,
            lambda2,
            pivot_range: (lo, hi),
        })
    }

    pub(crate) fn condition_estimate(&self) -> f64 {
        if self.pivot_range.0 > 0.0 {
            self.pivot_range.1 / self.pivot_range.0
        } else {
            f64::INFINITY
        }
    }

    pub(crate) fn log_det(&self) -> f64 {
        self.factors
            .iter()
            .map(|c| 2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
            .sum()
    }

    /// Solves `M X = B` for block-partitioned right-hand sides `rhs[t]`.
    pub(crate) fn solve(&self, rhs: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let t_len = self.factors.len();
        let mut w: Vec<DMatrix<f64>> = Vec::with_capacity(t_len);
        // forward: L w = b, with sub-diagonal factor blocks -lam^2 L_t^{-T}
        for t in 0..t_len {
            let mut b = rhs[t].clone();
            if t > 0 {
                let prev = self.factors[t - 1]
                    .l_dirty()
                    .tr_solve_lower_triangular(&w[t - 1])
                    .expect("non-singular factor");
                b += prev * self.lambda2;
            }
            let l = self.factors[t].l_dirty();
            w.push(l.solve_lower_triangular(&b).expect("non-singular factor"));
        }
        // backward: L' x = w
        let mut x: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); t_len];
        for t in (0..t_len).rev() {
            let l = self.factors[t].l_dirty();
            let mut c = w[t].clone();
            if t + 1 < t_len {
                c += l.solve_lower_triangular(&x[t + 1]).expect("non-singular factor") * self.lambda2;
            }
            x[t] = l.tr_solve_lower_triangular(&c).expect("non-singular factor");
        }
        x
    }

    /// Diagonal blocks of `M^{-1}`.
    pub(crate) fn inverse_diagonal(&self) -> Vec<DMatrix<f64>> {
        let t_len = self.factors.len();
        let lambda4 = self.lambda2 * self.lambda2;
        let mut out: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); t_len];
        for t in (0..t_len).rev() {
            let s_inv = self.factors[t].inverse();
            out[t] = if t + 1 < t_len {
                &s_inv + &s_inv * &out[t + 1] * &s_inv * lambda4
            } else {
                s_inv
            };
        }
        out
    }
}

/// Raw solution of the stacked system.
pub(crate) struct StackedSolution {
    /// `vec(A_t)` for each period.
    pub theta: Vec<DVector<f64>>,
    pub nu: DVector<f64>,
    /// Minimised objective `||y - D beta - 1 nu||^2 + lam^2 ||gamma - W beta||^2`.
    pub objective: f64,
    pub log_det_m: f64,
    pub condition_estimate: f64,
    /// Trace of the observation-row hat matrix (only when requested).
    pub edf_obs: Option<f64>,
}

/// `X_t' B` for `X_t = Z_{t-1}' (x) I_k` and a `k x m` block `B`.
fn xt_transpose_times(z: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
    let k = b.nrows();
    let mut out = DMatrix::zeros(z.len() * k, b.ncols());
    for (c, zc) in z.iter().enumerate() {
        for r in 0..k {
            for j in 0..b.ncols() {
                out[(c * k + r, j)] = zc * b[(r, j)];
            }
        }
    }
    out
}

/// `X_t Q` for an `n x m` block `Q`.
fn xt_times(z: &[f64], k: usize, q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(k, q.ncols());
    for (c, zc) in z.iter().enumerate() {
        for r in 0..k {
            for j in 0..q.ncols() {
                out[(r, j)] += zc * q[(c * k + r, j)];
            }
        }
    }
    out
}

pub(crate) fn solve_system(system: &StackedSystem, with_edf: bool) -> Result<StackedSolution> {
    let k = system.k;
    let n = system.state_dim();
    let t_len = system.t_eff();
    let lambda2 = system.options.lambda * system.options.lambda;
    let z_rows: Vec<Vec<f64>> = system
        .lagged
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();

    let diag: Vec<DMatrix<f64>> = (0..t_len)
        .map(|t| {
            let z = &z_rows[t];
            let mut m = DMatrix::zeros(n, n);
            for (c1, z1) in z.iter().enumerate() {
                for (c2, z2) in z.iter().enumerate() {
                    let v = z1 * z2;
                    for r in 0..k {
                        m[(c1 * k + r, c2 * k + r)] = v;
                    }
                }
            }
            let weight = match system.options.anchor {
                AnchorMode::Ols => {
                    if t + 1 < t_len {
                        2.0
                    } else {
                        1.0
                    }
                }
                AnchorMode::Diffuse => {
                    let mut w = 0.0;
                    if t > 0 {
                        w += 1.0;
                    }
                    if t + 1 < t_len {
                        w += 1.0;
                    }
                    w
                }
            };
            for i in 0..n {
                m[(i, i)] += weight * lambda2;
            }
            m
        })
        .collect();
    let tri = BlockTridiagonal::factor(diag, lambda2)?;

    // right-hand sides: column 0 is X_t' y_t (+ anchor), columns 1..=k are X_t' (intercept)
    let identity = DMatrix::<f64>::identity(k, k);
    let rhs: Vec<DMatrix<f64>> = (0..t_len)
        .map(|t| {
            let z = &z_rows[t];
            let y_t = system.responses.row(t).transpose();
            let mut b = DMatrix::zeros(n, 1 + k);
            b.column_mut(0).copy_from(&xt_transpose_times(z, &DMatrix::from_column_slice(k, 1, y_t.as_slice())).column(0));
            if t == 0 {
                if let Some(a) = &system.anchor {
                    let mut col = b.column_mut(0);
                    col += a * lambda2;
                }
            }
            b.columns_mut(1, k).copy_from(&xt_transpose_times(z, &identity));
            b
        })
        .collect();
    let sol = tri.solve(&rhs);

    // intercept Schur complement: T I - C' M^{-1} C, with C' M^{-1} r on the right
    let mut schur = DMatrix::<f64>::identity(k, k) * t_len as f64;
    let mut nu_rhs = DVector::zeros(k);
    for t in 0..t_len {
        let c_t = rhs[t].columns(1, k);
        let g_t = sol[t].columns(1, k);
        let h_t = sol[t].column(0);
        schur -= c_t.transpose() * g_t;
        nu_rhs += system.responses.row(t).transpose() - c_t.transpose() * h_t;
    }
    let schur = (&schur + schur.transpose()) * 0.5;
    let schur_chol = schur.clone().cholesky().ok_or_else(|| Error::Singular {
        context: "intercept Schur complement".into(),
        condition: crate::linalg::condition_number(&schur),
    })?;
    let nu = schur_chol.solve(&nu_rhs);

    let theta: Vec<DVector<f64>> = (0..t_len)
        .map(|t| sol[t].column(0) - sol[t].columns(1, k) * &nu)
        .collect();

    let mut objective = 0.0;
    for t in 0..t_len {
        let fitted = xt_times(&z_rows[t], k, &DMatrix::from_column_slice(n, 1, theta[t].as_slice()));
        for r in 0..k {
            let u = system.responses[(t, r)] - nu[r] - fitted[(r, 0)];
            objective += u * u;
        }
    }
    objective += lambda2 * state_penalty(system, &theta);

    let edf_obs = if with_edf {
        let sigma = tri.inverse_diagonal();
        let schur_inv = schur_chol.inverse();
        let mut trace = 0.0;
        for t in 0..t_len {
            let g_t = sol[t].columns(1, k).into_owned();
            // block (t,t) and (t,nu) of the bordered inverse
            let q_tt = &sigma[t] + &g_t * &schur_inv * g_t.transpose();
            let q_tn = -(&g_t * &schur_inv);
            let xq = xt_times(&z_rows[t], k, &q_tt);
            let xqx = xt_times(&z_rows[t], k, &xq.transpose());
            let cross = xt_times(&z_rows[t], k, &q_tn);
            trace += xqx.trace() + 2.0 * cross.trace() + schur_inv.trace();
        }
        Some(trace)
    } else {
        None
    };

    Ok(StackedSolution {
        theta,
        nu,
        objective,
        log_det_m: tri.log_det(),
        condition_estimate: tri.condition_estimate(),
        edf_obs,
    })
}

/// `||gamma - W beta||^2`.
pub(crate) fn state_penalty(system: &StackedSystem, theta: &[DVector<f64>]) -> f64 {
    let mut total = 0.0;
    if let (AnchorMode::Ols, Some(a)) = (system.options.anchor, &system.anchor) {
        total += (&theta[0] - a).norm_squared();
    }
    for w in theta.windows(2) {
        total += (&w[1] - &w[0]).norm_squared();
    }
    total
}
