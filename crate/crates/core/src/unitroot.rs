//! ADF-GLS unit-root test (Elliott, Rothenberg and Stock) with the Ng-Perron
//! modified BIC for the augmentation lag.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::least_squares;

/// 1% critical value of the constant-plus-trend ADF-GLS statistic.
pub const CRITICAL_VALUE_1PCT_TREND: f64 = -3.42;

/// Smallest series length accepted by the detrending step.
pub const MIN_OBS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetrendModel {
    Constant,
    ConstantTrend,
}

impl DetrendModel {
    /// Local-to-unity non-centrality used for quasi-differencing.
    pub fn default_cbar(self) -> f64 {
        match self {
            DetrendModel::Constant => -7.0,
            DetrendModel::ConstantTrend => -13.5,
        }
    }

    pub fn builtin_critical_value(self) -> Option<f64> {
        match self {
            DetrendModel::Constant => None,
            DetrendModel::ConstantTrend => Some(CRITICAL_VALUE_1PCT_TREND),
        }
    }

    fn regressors(self, t: usize) -> Vec<f64> {
        match self {
            DetrendModel::Constant => vec![1.0],
            DetrendModel::ConstantTrend => vec![1.0, (t + 1) as f64],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitRootConfig {
    pub model: DetrendModel,
    /// Maximum augmentation lag; `None` uses [`default_kmax`].
    pub kmax: Option<usize>,
    /// Overrides [`DetrendModel::default_cbar`].
    pub cbar: Option<f64>,
    /// Overrides the built-in 1% threshold (required for the constant-only model).
    pub critical_value: Option<f64>,
}

impl Default for UnitRootConfig {
    fn default() -> Self {
        Self {
            model: DetrendModel::ConstantTrend,
            kmax: None,
            cbar: None,
            critical_value: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitRootResult {
    /// t-ratio on the lagged detrended level.
    pub statistic: f64,
    pub lag: usize,
    pub kmax: usize,
    /// Coefficients of the quasi-differenced deterministic regression.
    pub phi_hat: Vec<f64>,
    pub critical_value_1pct: f64,
    pub reject_at_1pct: bool,
    pub detrend_model: DetrendModel,
    pub cbar: f64,
    /// Observations in the final ADF regression.
    pub nobs: usize,
}

/// Schwert-style upper bound `floor(12 (T/100)^{1/4})`.
pub fn default_kmax(t: usize) -> usize {
    (12.0 * (t as f64 / 100.0).powf(0.25)).floor() as usize
}

/// GLS detrending: quasi-difference with `alpha = 1 + cbar/T`, regress, and
/// subtract the fitted deterministic component from the original series.
pub fn gls_detrend(series: &[f64], model: DetrendModel, cbar: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = series.len();
    if n < MIN_OBS {
        return Err(Error::InsufficientData {
            what: "GLS detrending",
            needed: MIN_OBS,
            got: n,
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("series contains non-finite values".into()));
    }
    let alpha = 1.0 + cbar / n as f64;
    let m = model.regressors(0).len();
    let mut zq = DMatrix::zeros(n, m);
    let mut yq = DMatrix::zeros(n, 1);
    for t in 0..n {
        let z = model.regressors(t);
        if t == 0 {
            yq[(0, 0)] = series[0];
            for (j, v) in z.iter().enumerate() {
                zq[(0, j)] = *v;
            }
        } else {
            let zp = model.regressors(t - 1);
            yq[(t, 0)] = series[t] - alpha * series[t - 1];
            for j in 0..m {
                zq[(t, j)] = z[j] - alpha * zp[j];
            }
        }
    }
    let names: Vec<String> = ["const", "trend"][..m].iter().map(|s| s.to_string()).collect();
    let fit = least_squares(&zq, &yq, &names).map_err(|e| match e {
        Error::RankDeficient { column } => Error::Singular {
            context: format!("GLS detrending regressor `{column}`"),
            condition: f64::INFINITY,
        },
        e => e,
    })?;
    let phi: Vec<f64> = fit.coef.column(0).iter().copied().collect();
    let detrended = (0..n)
        .map(|t| {
            let z = model.regressors(t);
            series[t] - z.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();
    Ok((detrended, phi))
}

struct AdfFit {
    rho0: f64,
    se_rho0: f64,
    ssr: f64,
    nobs: usize,
    sum_sq_lagged_level: f64,
}

/// `dy_t = rho0 y_{t-1} + sum_j rho_j dy_{t-j} + e_t` over `t in start..n`.
fn adf_regression(y: &[f64], lag: usize, start: usize) -> Result<AdfFit> {
    debug_assert!(start > lag);
    let n = y.len();
    let rows = n - start;
    let m = lag + 1;
    if rows <= m {
        return Err(Error::InsufficientData {
            what: "ADF regression",
            needed: m + 1,
            got: rows,
        });
    }
    let mut x = DMatrix::zeros(rows, m);
    let mut dy = DMatrix::zeros(rows, 1);
    for (r, t) in (start..n).enumerate() {
        dy[(r, 0)] = y[t] - y[t - 1];
        x[(r, 0)] = y[t - 1];
        for j in 1..=lag {
            x[(r, j)] = y[t - j] - y[t - j - 1];
        }
    }
    let names: Vec<String> = (0..m)
        .map(|j| if j == 0 { "level_lag".into() } else { format!("diff_lag{j}") })
        .collect();
    let fit = least_squares(&x, &dy, &names)?;
    let ssr = fit.residuals.norm_squared();
    let s2 = ssr / (rows - m) as f64;
    Ok(AdfFit {
        rho0: fit.coef[(0, 0)],
        se_rho0: (s2 * fit.xtx_inv[(0, 0)]).sqrt(),
        ssr,
        nobs: rows,
        sum_sq_lagged_level: x.column(0).norm_squared(),
    })
}

/// Ng-Perron MBIC lag choice over `0..=kmax` on the common sample `t >= kmax + 1`.
pub fn select_adf_lag_mbic(detrended: &[f64], kmax: usize) -> Result<usize> {
    let n = detrended.len();
    if n < kmax + 1 + MIN_OBS {
        return Err(Error::InsufficientData {
            what: "MBIC lag selection",
            needed: kmax + 1 + MIN_OBS,
            got: n,
        });
    }
    if kmax == 0 {
        return Ok(0);
    }
    let start = kmax + 1;
    let mut best = (f64::INFINITY, 0);
    for k in 0..=kmax {
        let fit = adf_regression(detrended, k, start)?;
        let t_eff = fit.nobs as f64;
        let sigma2 = fit.ssr / t_eff;
        let tau = fit.rho0 * fit.rho0 * fit.sum_sq_lagged_level / sigma2;
        let mbic = sigma2.ln() + t_eff.ln() * (tau + k as f64) / t_eff;
        if mbic < best.0 {
            best = (mbic, k);
        }
    }
    Ok(best.1)
}

/// Full ADF-GLS test: detrend, pick the lag by MBIC, re-estimate on the
/// longest sample available for that lag and compare to the 1% threshold.
pub fn adf_gls_test(series: &[f64], cfg: &UnitRootConfig) -> Result<UnitRootResult> {
    let n = series.len();
    let cbar = cfg.cbar.unwrap_or_else(|| cfg.model.default_cbar());
    let critical = cfg
        .critical_value
        .or_else(|| cfg.model.builtin_critical_value())
        .ok_or_else(|| {
            Error::invalid("no built-in critical value for the constant-only model; supply one")
        })?;
    let kmax = match cfg.kmax {
        Some(k) => k,
        None => default_kmax(n).min(n.saturating_sub(MIN_OBS + 1)),
    };
    let (detrended, phi_hat) = gls_detrend(series, cfg.model, cbar)?;
    let lag = select_adf_lag_mbic(&detrended, kmax)?;
    let fit = adf_regression(&detrended, lag, lag + 1)?;
    let statistic = fit.rho0 / fit.se_rho0;
    Ok(UnitRootResult {
        statistic,
        lag,
        kmax,
        phi_hat,
        critical_value_1pct: critical,
        reject_at_1pct: statistic < critical,
        detrend_model: cfg.model,
        cbar,
        nobs: fit.nobs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn constant_series_detrends_to_zero() {
        let y = vec![5.0; 30];
        let (d, phi) = gls_detrend(&y, DetrendModel::Constant, -7.0).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-12));
        assert!((phi[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn exact_trend_is_absorbed() {
        let y: Vec<f64> = (1..=40).map(|t| 2.0 + 3.0 * t as f64).collect();
        let (d, phi) = gls_detrend(&y, DetrendModel::ConstantTrend, -13.5).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-10));
        assert!((phi[0] - 2.0).abs() < 1e-9 && (phi[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn detrending_matches_direct_normal_equations() {
        let e = noise(200, 3);
        let mut y = vec![0.0; 200];
        for t in 1..200 {
            y[t] = 0.6 * y[t - 1] + e[t];
        }
        let (d, _) = gls_detrend(&y, DetrendModel::ConstantTrend, -13.5).unwrap();
        // oracle: 2x2 normal equations on the quasi-differenced data
        let n = y.len();
        let a = 1.0 - 13.5 / n as f64;
        let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for t in 0..n {
            let (z1, z2, yy) = if t == 0 {
                (1.0, 1.0, y[0])
            } else {
                (1.0 - a, (t + 1) as f64 - a * t as f64, y[t] - a * y[t - 1])
            };
            s11 += z1 * z1;
            s12 += z1 * z2;
            s22 += z2 * z2;
            r1 += z1 * yy;
            r2 += z2 * yy;
        }
        let det = s11 * s22 - s12 * s12;
        let b1 = (s22 * r1 - s12 * r2) / det;
        let b2 = (s11 * r2 - s12 * r1) / det;
        for t in 0..n {
            let expect = y[t] - b1 - b2 * (t + 1) as f64;
            assert!((d[t] - expect).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            gls_detrend(&[1.0; 9], DetrendModel::Constant, -7.0),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn kmax_zero_selects_zero() {
        assert_eq!(select_adf_lag_mbic(&noise(50, 1), 0).unwrap(), 0);
    }

    #[test]
    fn kmax_too_large_for_sample() {
        assert!(select_adf_lag_mbic(&noise(20, 1), 10).is_err());
    }

    #[test]
    fn default_kmax_rule() {
        assert_eq!(default_kmax(100), 12);
        assert_eq!(default_kmax(519), 18);
    }

    #[test]
    fn constant_model_needs_threshold() {
        let cfg = UnitRootConfig {
            model: DetrendModel::Constant,
            ..Default::default()
        };
        assert!(adf_gls_test(&noise(100, 2), &cfg).is_err());
        let cfg = UnitRootConfig {
            critical_value: Some(-2.58),
            ..cfg
        };
        let r = adf_gls_test(&noise(100, 2), &cfg).unwrap();
        assert_eq!(r.reject_at_1pct, r.statistic < -2.58);
    }

    #[test]
    fn trend_and_scale_invariance() {
        let y = noise(150, 9);
        let cfg = UnitRootConfig::default();
        let base = adf_gls_test(&y, &cfg).unwrap();
        let shifted: Vec<f64> = y.iter().enumerate().map(|(t, v)| v + 3.0 - 0.2 * t as f64).collect();
        let scaled: Vec<f64> = y.iter().map(|v| v * 17.0).collect();
        let s = adf_gls_test(&shifted, &cfg).unwrap();
        let c = adf_gls_test(&scaled, &cfg).unwrap();
        assert_eq!(s.lag, base.lag);
        assert!((s.statistic - base.statistic).abs() < 1e-8);
        assert!((c.statistic - base.statistic).abs() < 1e-10);
    }

    #[test]
    fn white_noise_innovations_mostly_select_lag_zero() {
        let mut zero = 0;
        for rep in 0..1000 {
            let e = noise(200, 1000 + rep);
            let y: Vec<f64> = e
                .iter()
                .scan(0.0, |acc, v| {
                    *acc += v;
                    Some(*acc)
                })
                .collect();
            let (d, _) = gls_detrend(&y, DetrendModel::ConstantTrend, -13.5).unwrap();
            if select_adf_lag_mbic(&d, 8).unwrap() == 0 {
                zero += 1;
            }
        }
        assert!(zero > 700, "lag 0 chosen {zero}/1000");
    }

    #[test]
    fn ma_contaminated_unit_root_selects_positive_lag() {
        let mut positive = 0;
        for rep in 0..300 {
            let e = noise(300, 5000 + rep);
            let mut y = vec![0.0; 300];
            for t in 1..300 {
                y[t] = y[t - 1] + e[t] - 0.8 * e[t - 1];
            }
            let (d, _) = gls_detrend(&y, DetrendModel::ConstantTrend, -13.5).unwrap();
            if select_adf_lag_mbic(&d, 10).unwrap() > 0 {
                positive += 1;
            }
        }
        assert!(positive > 240, "positive lag chosen {positive}/300");
    }
}
