use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::VarEstimate;
use crate::error::Result;

/// Truncation lag for the Bartlett kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bandwidth {
    Auto,
    Fixed(usize),
}

/// `floor(4 (T/100)^{2/9})`.
pub fn auto_bandwidth(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

pub(super) fn nw_cov_all(
    x: &DMatrix<f64>,
    residuals: &DMatrix<f64>,
    xtx_inv: &DMatrix<f64>,
    bandwidth: usize,
) -> Vec<DMatrix<f64>> {
    (0..residuals.ncols())
        .map(|i| {
            let mut scores = x.clone();
            for (r, mut row) in scores.row_iter_mut().enumerate() {
                row *= residuals[(r, i)];
            }
            let meat = bartlett_long_run(&scores, bandwidth);
            xtx_inv * meat * xtx_inv
        })
        .collect()
}

/// `Gamma_0 + sum_j (1 - j/(L+1)) (Gamma_j + Gamma_j')` for score rows `g_t`.
fn bartlett_long_run(g: &DMatrix<f64>, lags: usize) -> DMatrix<f64> {
    let n = g.nrows();
    let mut s = g.transpose() * g;
    for j in 1..=lags.min(n.saturating_sub(1)) {
        let w = 1.0 - j as f64 / (lags + 1) as f64;
        let lead = g.rows(j, n - j);
        let lag = g.rows(0, n - j);
        let gamma = lead.transpose() * lag;
        s += (&gamma + gamma.transpose()) * w;
    }
    s
}

/// Per-equation HAC covariance `(X'X)^{-1} S (X'X)^{-1}` of the VAR coefficients.
pub fn newey_west_cov(estimate: &VarEstimate, bandwidth: Bandwidth) -> Result<Vec<DMatrix<f64>>> {
    let lags = match bandwidth {
        Bandwidth::Auto => auto_bandwidth(estimate.n_obs()),
        Bandwidth::Fixed(l) => l,
    };
    let xtx = estimate.regressors.transpose() * &estimate.regressors;
    let xtx_inv = crate::linalg::spd_inverse(&xtx, "regressor cross-product")?;
    Ok(nw_cov_all(&estimate.regressors, &estimate.residuals, &xtx_inv, lags))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::ReturnsPanel;
    use crate::var::fit_var;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn draw(rng: &mut ChaCha8Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    #[test]
    fn bandwidth_rule() {
        assert_eq!(auto_bandwidth(100), 4);
        assert_eq!(auto_bandwidth(518), 5);
    }

    #[test]
    fn zero_bandwidth_is_white() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = DMatrix::from_fn(120, 2, |_, _| draw(&mut rng));
        let est = fit_var(&ReturnsPanel::from_matrix(y).unwrap(), 1).unwrap();
        let nw = newey_west_cov(&est, Bandwidth::Fixed(0)).unwrap();
        let x = &est.regressors;
        let bread = (x.transpose() * x).try_inverse().unwrap();
        for i in 0..2 {
            let mut meat = DMatrix::zeros(3, 3);
            for t in 0..x.nrows() {
                let xt = x.row(t).transpose();
                meat += &xt * xt.transpose() * est.residuals[(t, i)].powi(2);
            }
            let white = &bread * meat * &bread;
            assert!((&nw[i] - white).amax() < 1e-12);
        }
    }

    #[test]
    fn iid_errors_nw_close_to_classical() {
        let mut ratio_sum = 0.0;
        let reps = 200;
        for rep in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(40 + rep);
            let y = DMatrix::from_fn(400, 1, |_, _| draw(&mut rng));
            let est = fit_var(&ReturnsPanel::from_matrix(y).unwrap(), 1).unwrap();
            let nw = &est.coef_cov_nw[0];
            let n = est.n_obs() as f64;
            let s2 = est.residuals.norm_squared() / (n - 2.0);
            let classical = (est.regressors.transpose() * &est.regressors).try_inverse().unwrap() * s2;
            ratio_sum += (nw[(1, 1)] / classical[(1, 1)]).sqrt();
        }
        let mean_ratio = ratio_sum / reps as f64;
        assert!((mean_ratio - 1.0).abs() < 0.15, "mean ratio {mean_ratio}");
    }

    #[test]
    fn serially_correlated_errors_inflate_intercept_variance() {
        // intercept plus an exogenous regressor, AR(1) errors with coefficient 0.5
        let mut exceed = 0;
        let reps = 200;
        for rep in 0..reps {
            let mut rng = ChaCha8Rng::seed_from_u64(700 + rep);
            let n = 400;
            let mut e = vec![0.0; n];
            for t in 1..n {
                e[t] = 0.5 * e[t - 1] + draw(&mut rng);
            }
            let x = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { draw(&mut rng) });
            let y = DMatrix::from_fn(n, 1, |t, _| 1.0 + 0.3 * x[(t, 1)] + e[t]);
            let names = vec!["const".to_string(), "x".to_string()];
            let fit = crate::linalg::least_squares(&x, &y, &names).unwrap();
            let nw = nw_cov_all(&x, &fit.residuals, &fit.xtx_inv, auto_bandwidth(n));
            let white = nw_cov_all(&x, &fit.residuals, &fit.xtx_inv, 0);
            if nw[0][(0, 0)] > white[0][(0, 0)] {
                exceed += 1;
            }
        }
        assert!(exceed as f64 >= 0.9 * reps as f64, "exceeded {exceed}/{reps}");
    }
}
