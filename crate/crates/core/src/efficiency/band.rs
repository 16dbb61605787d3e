//! Pointwise null bands for `zeta_t`: simulate panels under the efficiency
//! null, push each through the same TV-VAR fit, and take per-period quantiles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{zeta_path, DEFAULT_CONDITION_CAP};
use crate::dataio::ReturnsPanel;
use crate::error::{Error, Result};
use crate::linalg::{column_means, quantile_sorted};
use crate::sim::{gaussian_panel, replication_rng};
use crate::tvvar::{build_stacked_system, solve_path, TvVarEstimate, TvVarOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMethod {
    MonteCarlo,
    Bootstrap,
}

/// Mean and covariance of the i.i.d. Gaussian null panels.
#[derive(Debug, Clone)]
pub struct NullMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub label: String,
}

impl NullMoments {
    /// Sample mean and covariance (divisor `T - 1`) of the returns.
    pub fn from_returns(returns: &ReturnsPanel) -> Result<Self> {
        let y = returns.returns();
        let n = y.nrows();
        if n < 2 {
            return Err(Error::InsufficientData {
                what: "null moments",
                needed: 2,
                got: n,
            });
        }
        let mean = column_means(y);
        let mut centered = y.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-mean[j]);
        }
        let cov = centered.transpose() * &centered / (n - 1) as f64;
        Ok(Self {
            mean,
            cov,
            label: "sample".into(),
        })
    }

    pub fn identity(k: usize) -> Self {
        Self {
            mean: DVector::zeros(k),
            cov: DMatrix::identity(k, k),
            label: "identity".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BandOptions {
    pub replications: usize,
    pub level: f64,
    pub seed: u64,
    /// Estimation settings applied to every simulated panel.
    pub tvvar: TvVarOptions,
    pub condition_cap: f64,
}

impl Default for BandOptions {
    fn default() -> Self {
        Self {
            replications: 5000,
            level: 0.99,
            seed: 0,
            tvvar: TvVarOptions::default(),
            condition_cap: DEFAULT_CONDITION_CAP,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandMeta {
    pub method: BandMethod,
    pub replications: usize,
    pub level: f64,
    pub seed: u64,
    pub lambda: f64,
    pub null_moments: Option<String>,
    /// Quantiles are taken period by period, not uniformly over `t`.
    pub pointwise: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Band {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub meta: BandMeta,
}

/// Simulated `zeta_t` draws, sorted within each period.
#[derive(Debug, Clone)]
pub struct NullDistribution {
    /// `per_period[t]` holds every replication's `zeta_t`, ascending;
    /// undefined multipliers enter as `+inf`.
    pub per_period: Vec<Vec<f64>>,
    pub meta: BandMeta,
}

impl NullDistribution {
    /// Per-period quantile at probability `prob`.
    pub fn quantile(&self, prob: f64) -> Vec<f64> {
        self.per_period.iter().map(|d| quantile_sorted(d, prob)).collect()
    }

    /// Two-sided band with tail mass `(1 - level)/2` on each side.
    pub fn band(&self, level: f64) -> Result<Band> {
        check_level(level)?;
        let tail = (1.0 - level) / 2.0;
        Ok(Band {
            lo: self.quantile(tail),
            hi: self.quantile(1.0 - tail),
            meta: BandMeta {
                level,
                ..self.meta.clone()
            },
        })
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("band level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

fn check_options(opts: &BandOptions) -> Result<()> {
    check_level(opts.level)?;
    if opts.replications < 100 {
        return Err(Error::invalid(format!(
            "at least 100 replications are required, got {}",
            opts.replications
        )));
    }
    if opts.tvvar.refinement != crate::tvvar::Refinement::None {
        return Err(Error::invalid(
            "band replications use a fixed lambda; resolve the refinement first",
        ));
    }
    Ok(())
}

fn zeta_for_panel(panel: DMatrix<f64>, p: usize, opts: &BandOptions) -> Result<Vec<f64>> {
    let returns = ReturnsPanel::from_matrix(panel)?;
    let system = build_stacked_system(&returns, p, opts.tvvar.system())?;
    let path = solve_path(&system)?;
    Ok(zeta_path(&path, opts.condition_cap)
        .into_iter()
        .map(|z| z.unwrap_or(f64::INFINITY))
        .collect())
}

fn collect(
    draws: Vec<Vec<f64>>,
    t_eff: usize,
    meta: BandMeta,
) -> NullDistribution {
    let mut per_period: Vec<Vec<f64>> = (0..t_eff)
        .map(|t| draws.iter().map(|d| d[t]).collect())
        .collect();
    per_period
        .par_iter_mut()
        .for_each(|v| v.sort_by(|a, b| a.total_cmp(b)));
    NullDistribution { per_period, meta }
}

/// Null draws from i.i.d. Gaussian panels with the given moments.
pub fn simulate_mc_null(
    t_eff: usize,
    p: usize,
    moments: &NullMoments,
    opts: &BandOptions,
) -> Result<NullDistribution> {
    check_options(opts)?;
    let k = moments.mean.len();
    if moments.cov.shape() != (k, k) {
        return Err(Error::invalid("null covariance must be k x k"));
    }
    if t_eff == 0 {
        return Err(Error::InsufficientData {
            what: "Monte Carlo band",
            needed: 1,
            got: 0,
        });
    }
    let chol = moments
        .cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular {
            context: "null covariance".into(),
            condition: crate::linalg::condition_number(&moments.cov),
        })?
        .l();
    let draws = (0..opts.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(opts.seed, rep);
            let panel = gaussian_panel(&mut rng, t_eff + p, &moments.mean, &chol);
            zeta_for_panel(panel, p, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect(
        draws,
        t_eff,
        BandMeta {
            method: BandMethod::MonteCarlo,
            replications: opts.replications,
            level: opts.level,
            seed: opts.seed,
            lambda: opts.tvvar.lambda,
            null_moments: Some(moments.label.clone()),
            pointwise: true,
        },
    ))
}

/// Monte Carlo band for a sample with `t_eff` effective periods.
pub fn mc_band(t_eff: usize, p: usize, moments: &NullMoments, opts: &BandOptions) -> Result<Band> {
    simulate_mc_null(t_eff, p, moments, opts)?.band(opts.level)
}

/// Null draws from panels `ybar + u*_t`, `u*_t` resampled with replacement
/// from the centred observation residuals of `estimate`.
pub fn simulate_bootstrap_null(
    estimate: &TvVarEstimate,
    opts: &BandOptions,
) -> Result<NullDistribution> {
    check_options(opts)?;
    let resid = &estimate.residuals;
    let (t_eff, k) = resid.shape();
    if t_eff == 0 {
        return Err(Error::InsufficientData {
            what: "bootstrap band",
            needed: 1,
            got: 0,
        });
    }
    let resid_mean = column_means(resid);
    let centered = DMatrix::from_fn(t_eff, k, |t, j| resid[(t, j)] - resid_mean[j]);
    let ybar = estimate.response_mean();
    let p = estimate.p;
    let draws = (0..opts.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(opts.seed, rep);
            let panel = DMatrix::from_fn(t_eff + p, k, |_, _| 0.0);
            let mut panel = panel;
            for t in 0..t_eff + p {
                let s = rng.random_range(0..t_eff);
                for j in 0..k {
                    panel[(t, j)] = ybar[j] + centered[(s, j)];
                }
            }
            zeta_for_panel(panel, p, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect(
        draws,
        t_eff,
        BandMeta {
            method: BandMethod::Bootstrap,
            replications: opts.replications,
            level: opts.level,
            seed: opts.seed,
            lambda: opts.tvvar.lambda,
            null_moments: None,
            pointwise: true,
        },
    ))
}

/// Residual-bootstrap band around an estimate.
pub fn bootstrap_band(estimate: &TvVarEstimate, opts: &BandOptions) -> Result<Band> {
    simulate_bootstrap_null(estimate, opts)?.band(opts.level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tvvar::fit_tvvar;

    fn opts(reps: usize, seed: u64) -> BandOptions {
        BandOptions {
            replications: reps,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn band_is_nonnegative_and_ordered() {
        let m = NullMoments {
            mean: DVector::from_vec(vec![0.005, 0.004]),
            cov: DMatrix::from_row_slice(2, 2, &[0.0016, 0.0008, 0.0008, 0.0018]),
            label: "test".into(),
        };
        let band = mc_band(60, 1, &m, &opts(200, 1)).unwrap();
        assert_eq!(band.lo.len(), 60);
        for t in 0..60 {
            assert!(band.lo[t] >= 0.0);
            assert!(band.hi[t] > 0.0);
            assert!(band.lo[t] <= band.hi[t]);
        }
    }

    #[test]
    fn nested_levels() {
        let m = NullMoments::identity(2);
        let null = simulate_mc_null(40, 1, &m, &opts(300, 2)).unwrap();
        let b95 = null.band(0.95).unwrap();
        let b99 = null.band(0.99).unwrap();
        for t in 0..40 {
            assert!(b99.lo[t] <= b95.lo[t] && b95.hi[t] <= b99.hi[t]);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let m = NullMoments::identity(1);
        let a = mc_band(30, 1, &m, &opts(150, 9)).unwrap();
        let b = mc_band(30, 1, &m, &opts(150, 9)).unwrap();
        assert_eq!(a.hi, b.hi);
        assert_eq!(a.lo, b.lo);
        let c = mc_band(30, 1, &m, &opts(150, 10)).unwrap();
        assert_ne!(a.hi, c.hi);
    }

    #[test]
    fn bootstrap_deterministic_and_degenerate_collapse() {
        let mut rng = replication_rng(3, 0);
        let y = DMatrix::from_fn(80, 2, |_, _| 0.05 * crate::sim::standard_normal(&mut rng));
        let r = ReturnsPanel::from_matrix(y).unwrap();
        let est = fit_tvvar(&r, 1, &TvVarOptions::default()).unwrap();
        let a = bootstrap_band(&est, &opts(120, 4)).unwrap();
        let b = bootstrap_band(&est, &opts(120, 4)).unwrap();
        assert_eq!(a.hi, b.hi);
        assert_eq!(a.meta.method, BandMethod::Bootstrap);

        // zero residuals: every null panel is the constant mean
        let mut degenerate = est.clone();
        degenerate.residuals.fill(0.0);
        let band = bootstrap_band(&degenerate, &opts(100, 4)).unwrap();
        for t in 0..band.lo.len() {
            assert!((band.hi[t] - band.lo[t]).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_options() {
        let m = NullMoments::identity(1);
        assert!(mc_band(30, 1, &m, &opts(50, 1)).is_err());
        let bad = BandOptions {
            level: 1.0,
            ..opts(200, 1)
        };
        assert!(mc_band(30, 1, &m, &bad).is_err());
        let refine = BandOptions {
            tvvar: TvVarOptions {
                refinement: crate::tvvar::Refinement::FeasibleGls,
                ..Default::default()
            },
            ..opts(200, 1)
        };
        assert!(mc_band(30, 1, &m, &refine).is_err());
    }
}
