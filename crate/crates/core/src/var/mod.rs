//! Time-invariant VAR(p): equation-by-equation OLS, BIC lag choice,
//! Newey-West standard errors and Hansen's joint parameter-constancy test.

mod hac;
mod hansen;

pub use hac::{auto_bandwidth, newey_west_cov, Bandwidth};
pub use hansen::{
    hansen_lc, simulate_lc_critical_value, ConstancyResult, LcCriticalMethod, LcSimulation,
};

use nalgebra::{DMatrix, DVector};

use crate::dataio::ReturnsPanel;
use crate::error::{Error, Result};
use crate::linalg::least_squares;

/// Upper bound on the lag order searched when `p` is chosen automatically.
pub const DEFAULT_PMAX: usize = 8;

#[derive(Debug, Clone)]
pub struct VarEstimate {
    pub p: usize,
    pub k: usize,
    pub markets: Vec<String>,
    pub nu: DVector<f64>,
    /// `A_1..A_p`, each `k x k`; `a[i][(r, c)]` is the effect of `y_{c,t-i-1}` on `y_{r,t}`.
    pub a: Vec<DMatrix<f64>>,
    /// Stacked coefficients, `(1 + k p) x k`, one column per equation.
    pub coef: DMatrix<f64>,
    pub regressor_names: Vec<String>,
    /// Design matrix `[1, y_{t-1}', .., y_{t-p}']` over the effective sample.
    pub regressors: DMatrix<f64>,
    pub responses: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    /// Newey-West covariance of each equation's coefficients.
    pub coef_cov_nw: Vec<DMatrix<f64>>,
    pub nw_bandwidth: usize,
    pub adj_r2: Vec<f64>,
    /// Row range of the returns panel used as left-hand side.
    pub sample_span: (usize, usize),
    /// The `p` observations preceding the effective sample.
    pub presample: DMatrix<f64>,
}

impl VarEstimate {
    pub fn n_obs(&self) -> usize {
        self.residuals.nrows()
    }

    /// Newey-West standard errors, `(1 + k p) x k` like [`VarEstimate::coef`].
    pub fn nw_standard_errors(&self) -> DMatrix<f64> {
        let m = self.coef.nrows();
        DMatrix::from_fn(m, self.k, |r, i| self.coef_cov_nw[i][(r, r)].sqrt())
    }

    /// Maximum-likelihood residual covariance `U'U / T_eff`.
    pub fn residual_cov(&self) -> DMatrix<f64> {
        self.residuals.transpose() * &self.residuals / self.n_obs() as f64
    }
}

pub(crate) fn regressor_names(markets: &[String], p: usize) -> Vec<String> {
    let mut names = vec!["const".to_string()];
    for lag in 1..=p {
        for m in markets {
            names.push(format!("{m}.l{lag}"));
        }
    }
    names
}

/// Rows `start..T` of `[1, y_{t-1}', .., y_{t-p}']` and the matching `y_t`.
pub(crate) fn var_design(y: &DMatrix<f64>, p: usize, start: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (t_total, k) = y.shape();
    let rows = t_total - start;
    let mut x = DMatrix::zeros(rows, 1 + k * p);
    for (r, t) in (start..t_total).enumerate() {
        x[(r, 0)] = 1.0;
        for lag in 1..=p {
            for j in 0..k {
                x[(r, 1 + (lag - 1) * k + j)] = y[(t - lag, j)];
            }
        }
    }
    (x, y.rows(start, rows).into_owned())
}

fn check_sample(t: usize, k: usize, p: usize, start: usize) -> Result<()> {
    let needed = k * p + 2;
    if t <= start || t - start < needed {
        return Err(Error::InsufficientData {
            what: "VAR estimation",
            needed: start + needed,
            got: t,
        });
    }
    Ok(())
}

fn fit_on(returns: &ReturnsPanel, p: usize, start: usize) -> Result<VarEstimate> {
    if p == 0 {
        return Err(Error::invalid("VAR lag order must be at least 1"));
    }
    let y = returns.returns();
    let (t_total, k) = y.shape();
    check_sample(t_total, k, p, start)?;
    let (x, yy) = var_design(y, p, start);
    let names = regressor_names(returns.markets(), p);
    let fit = least_squares(&x, &yy, &names)?;
    let n = x.nrows();
    let m = x.ncols();
    let nu = fit.coef.row(0).transpose();
    let a = (0..p)
        .map(|lag| DMatrix::from_fn(k, k, |r, c| fit.coef[(1 + lag * k + c, r)]))
        .collect();
    let adj_r2 = (0..k)
        .map(|i| {
            let col = yy.column(i);
            let mean = col.mean();
            let sst: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
            let ssr = fit.residuals.column(i).norm_squared();
            1.0 - (ssr / (n - m) as f64) / (sst / (n - 1) as f64)
        })
        .collect();
    let bandwidth = auto_bandwidth(n);
    let coef_cov_nw = hac::nw_cov_all(&x, &fit.residuals, &fit.xtx_inv, bandwidth);
    Ok(VarEstimate {
        p,
        k,
        markets: returns.markets().to_vec(),
        nu,
        a,
        coef: fit.coef,
        regressor_names: names,
        regressors: x,
        responses: yy,
        residuals: fit.residuals,
        coef_cov_nw,
        nw_bandwidth: bandwidth,
        adj_r2,
        sample_span: (start, t_total),
        presample: y.rows(start - p, p).into_owned(),
    })
}

/// OLS estimate of `y_t = nu + A_1 y_{t-1} + .. + A_p y_{t-p} + u_t`.
pub fn fit_var(returns: &ReturnsPanel, p: usize) -> Result<VarEstimate> {
    fit_on(returns, p, p)
}

/// BIC over `p = 1..=pmax` on the common sample that drops the first `pmax` rows.
pub fn select_var_lag_bic(returns: &ReturnsPanel, pmax: usize) -> Result<usize> {
    if pmax == 0 {
        return Err(Error::invalid("pmax must be at least 1"));
    }
    let (t_total, k) = returns.returns().shape();
    check_sample(t_total, k, pmax, pmax)?;
    if pmax == 1 {
        return Ok(1);
    }
    let t_eff = (t_total - pmax) as f64;
    let mut best = (f64::INFINITY, 0);
    for p in 1..=pmax {
        let est = fit_on(returns, p, pmax)?;
        let sigma = est.residual_cov();
        let det = sigma.determinant();
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::Singular {
                context: format!("residual covariance at p = {p}"),
                condition: crate::linalg::condition_number(&sigma),
            });
        }
        let bic = det.ln() + t_eff.ln() / t_eff * (p * k * k) as f64;
        if bic < best.0 {
            best = (bic, p);
        }
    }
    Ok(best.1)
}

/// Largest `p <= pmax` that leaves enough observations for estimation.
pub fn feasible_pmax(t: usize, k: usize, pmax: usize) -> usize {
    (1..=pmax)
        .rev()
        .find(|&p| t > p && t - p >= k * p + 2)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::simulate_var;

    #[test]
    fn exact_recursion_is_recovered() {
        // y_t = 0.2 + 0.5 y_{t-1}, no noise: regressors span {1, 0.5^t}
        let mut y = DMatrix::zeros(30, 1);
        y[(0, 0)] = 3.0;
        for t in 1..30 {
            y[(t, 0)] = 0.2 + 0.5 * y[(t - 1, 0)];
        }
        let est = fit_var(&ReturnsPanel::from_matrix(y).unwrap(), 1).unwrap();
        assert!((est.a[0][(0, 0)] - 0.5).abs() < 1e-8);
        assert!((est.nu[0] - 0.2).abs() < 1e-8);
        assert!(est.residuals.amax() < 1e-10);
    }

    #[test]
    fn two_market_recursion_with_equal_rates_is_collinear() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let mut y = DMatrix::zeros(30, 2);
        y[(0, 0)] = 1.0;
        y[(0, 1)] = 3.0;
        for t in 1..30 {
            let next = &a * y.row(t - 1).transpose();
            y.set_row(t, &next.transpose());
        }
        let panel = ReturnsPanel::from_matrix(y).unwrap();
        assert!(matches!(fit_var(&panel, 1), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn residuals_orthogonal_to_regressors() {
        let a = DMatrix::from_row_slice(3, 3, &[0.2, 0.1, 0.0, 0.0, 0.3, -0.1, 0.05, 0.0, 0.1]);
        let panel = simulate_var(&[a], &[0.01, 0.0, -0.02], 0.05, 200, 17);
        let est = fit_var(&panel, 2).unwrap();
        let cross = est.regressors.transpose() * &est.residuals;
        assert!(cross.amax() < 1e-8);
        assert_eq!(est.coef.shape(), (7, 3));
        assert_eq!(est.residuals.shape(), (198, 3));
    }

    #[test]
    fn independent_data_gives_small_coefficients() {
        let zero = DMatrix::zeros(2, 2);
        let panel = simulate_var(&[zero], &[0.0, 0.0], 1.0, 2000, 11);
        let est = fit_var(&panel, 1).unwrap();
        let se = est.nw_standard_errors();
        for i in 0..2 {
            for r in 1..3 {
                assert!(est.coef[(r, i)].abs() < 3.0 * se[(r, i)]);
            }
        }
        for c in est.residuals.column_iter() {
            assert!(c.sum().abs() < 1e-10);
        }
    }

    #[test]
    fn column_order_permutes_estimates() {
        let a = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, -0.2, 0.4]);
        let panel = simulate_var(&[a], &[0.1, -0.1], 1.0, 300, 5);
        let e1 = fit_var(&panel, 1).unwrap();
        let e2 = fit_var(&panel.select_markets(&["y2", "y1"]).unwrap(), 1).unwrap();
        assert!((e1.nu[0] - e2.nu[1]).abs() < 1e-12);
        for r in 0..2 {
            for c in 0..2 {
                assert!((e1.a[0][(r, c)] - e2.a[0][(1 - r, 1 - c)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bic_single_candidate() {
        let panel = simulate_var(&[DMatrix::zeros(2, 2)], &[0.0, 0.0], 1.0, 50, 1);
        assert_eq!(select_var_lag_bic(&panel, 1).unwrap(), 1);
    }

    #[test]
    fn bic_selects_true_order_mostly() {
        let a1 = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.0, 0.3]);
        let mut ones = 0;
        for rep in 0..100 {
            let panel = simulate_var(&[a1.clone()], &[0.0, 0.0], 1.0, 500, 100 + rep);
            if select_var_lag_bic(&panel, 4).unwrap() == 1 {
                ones += 1;
            }
        }
        assert!(ones >= 90, "p = 1 chosen {ones}/100");

        let a2 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        let a2b = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.1, -0.4]);
        let mut twos = 0;
        for rep in 0..100 {
            let panel = simulate_var(&[a2.clone(), a2b.clone()], &[0.0, 0.0], 1.0, 500, 900 + rep);
            if select_var_lag_bic(&panel, 4).unwrap() == 2 {
                twos += 1;
            }
        }
        assert!(twos >= 90, "p = 2 chosen {twos}/100");
    }

    #[test]
    fn too_short_sample_errors() {
        let panel = ReturnsPanel::from_matrix(DMatrix::from_element(4, 2, 1.0)).unwrap();
        assert!(matches!(fit_var(&panel, 2), Err(Error::InsufficientData { .. })));
        assert_eq!(feasible_pmax(4, 2, 8), 0);
        assert_eq!(feasible_pmax(100, 2, 8), 8);
    }

    #[test]
    fn collinear_column_named() {
        let mut y = DMatrix::zeros(30, 2);
        for t in 0..30 {
            y[(t, 0)] = ((t * 13) % 7) as f64;
            y[(t, 1)] = 2.0 * y[(t, 0)];
        }
        let panel = ReturnsPanel::from_matrix(y).unwrap();
        match fit_var(&panel, 1) {
            Err(Error::RankDeficient { column }) => assert_eq!(column, "y2.l1"),
            other => panic!("unexpected {:?}", other.map(|_| ())),
        }
    }
}
