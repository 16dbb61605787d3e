//! Random-walk time-varying VAR estimated in one shot from the stacked
//! observation and state equations.
//!
//! The coefficient path minimises
//! `||y - D beta - 1 (x) nu||^2 + lam^2 ||gamma - W beta||^2`, which is the
//! posterior mean of a Gaussian state-space model with observation noise
//! `sigma_u` and state noise `sigma_u / lam`. The intercept is constant.

mod solver;
mod system;

pub use system::{build_stacked_system, AnchorMode, StackedSystem, SystemOptions};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::ReturnsPanel;
use crate::error::{Error, Result};
use solver::{solve_system, state_penalty, StackedSolution};

/// How the smoothing ratio is settled after the initial solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    /// Use `lambda` as given.
    None,
    /// One feasible-GLS step: re-solve with `lambda = sigma_u / sigma_v`.
    FeasibleGls,
    /// Maximise the concentrated Gaussian likelihood over the grid.
    LikelihoodGrid(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvVarOptions {
    pub lambda: f64,
    pub anchor: AnchorMode,
    pub refinement: Refinement,
}

impl Default for TvVarOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            anchor: AnchorMode::Ols,
            refinement: Refinement::None,
        }
    }
}

impl TvVarOptions {
    pub fn system(&self) -> SystemOptions {
        SystemOptions {
            lambda: self.lambda,
            anchor: self.anchor,
        }
    }

    /// The same settings with `lambda` fixed and no further refinement.
    pub fn resolved(&self, lambda: f64) -> Self {
        Self {
            lambda,
            anchor: self.anchor,
            refinement: Refinement::None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TvVarMeta {
    pub anchor_mode: AnchorMode,
    /// OLS fit used as anchor was rank deficient; a minimum-norm solution was used.
    pub anchor_rank_deficient: bool,
    pub lambda_selection: String,
    /// Concentrated Gaussian log-likelihood at the final `lambda`.
    pub log_likelihood: f64,
    /// Penalised least-squares objective at the optimum.
    pub objective: f64,
    /// Trace of the hat matrix restricted to observation rows.
    pub edf_obs: f64,
    /// Remaining parameter count attributed to the state rows.
    pub edf_state: f64,
    /// Ratio of largest to smallest squared Cholesky pivot.
    pub condition_estimate: f64,
    pub noise_scale_note: String,
}

#[derive(Debug, Clone)]
pub struct TvVarEstimate {
    pub k: usize,
    pub p: usize,
    pub markets: Vec<String>,
    /// Date labels of the effective sample.
    pub dates: Vec<String>,
    /// `a_path[t][i]` is `A_{i+1,t}`.
    pub a_path: Vec<Vec<DMatrix<f64>>>,
    pub nu: DVector<f64>,
    /// `T_eff x k` observation residuals.
    pub residuals: DMatrix<f64>,
    /// One row per state equation: `vec(A_t) - vec(A_{t-1})`.
    pub innovations: DMatrix<f64>,
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub lambda: f64,
    /// `T_eff x k` left-hand side and `T_eff x k p` lagged regressors.
    pub responses: DMatrix<f64>,
    pub lagged: DMatrix<f64>,
    pub meta: TvVarMeta,
}

impl TvVarEstimate {
    pub fn t_eff(&self) -> usize {
        self.a_path.len()
    }

    /// `nu + A_t Z_{t-1}` for every period.
    pub fn fitted(&self) -> DMatrix<f64> {
        let t_eff = self.t_eff();
        let mut out = DMatrix::zeros(t_eff, self.k);
        for t in 0..t_eff {
            let z = self.lagged.row(t).transpose();
            let mut f = self.nu.clone();
            for (lag, a) in self.a_path[t].iter().enumerate() {
                f += a * z.rows(lag * self.k, self.k);
            }
            out.set_row(t, &f.transpose());
        }
        out
    }

    /// Column means of the observed responses.
    pub fn response_mean(&self) -> DVector<f64> {
        crate::linalg::column_means(&self.responses)
    }
}

fn unpack(theta: &DVector<f64>, k: usize, p: usize) -> Vec<DMatrix<f64>> {
    (0..p)
        .map(|lag| DMatrix::from_fn(k, k, |r, j| theta[((lag * k) + j) * k + r]))
        .collect()
}

/// Concentrated log-likelihood of the Gaussian state-space model implied by
/// the stacked system at its current `lambda`.
fn log_likelihood(system: &StackedSystem, sol: &StackedSolution) -> f64 {
    let n_obs = system.n_obs_rows() as f64;
    let state_rows = system.n_state_rows() as f64;
    let lambda2 = system.options.lambda * system.options.lambda;
    let sigma2 = sol.objective / n_obs;
    -0.5 * n_obs * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) - 0.5 * sol.log_det_m
        + 0.5 * state_rows * lambda2.ln()
}

fn estimate_from(system: &StackedSystem, sol: StackedSolution, selection: String) -> TvVarEstimate {
    let (k, p) = (system.k, system.p);
    let n = system.state_dim();
    let t_eff = system.t_eff();
    let a_path: Vec<Vec<DMatrix<f64>>> = sol.theta.iter().map(|th| unpack(th, k, p)).collect();

    let mut residuals = DMatrix::zeros(t_eff, k);
    for t in 0..t_eff {
        let z = system.lagged.row(t).transpose();
        let mut f = sol.nu.clone();
        for (lag, a) in a_path[t].iter().enumerate() {
            f += a * z.rows(lag * k, k);
        }
        for r in 0..k {
            residuals[(t, r)] = system.responses[(t, r)] - f[r];
        }
    }

    let first = match system.options.anchor {
        AnchorMode::Ols => 0,
        AnchorMode::Diffuse => 1,
    };
    let mut innovations = DMatrix::zeros(t_eff - first, n);
    for t in first..t_eff {
        let prev = if t == 0 {
            system.anchor.clone().expect("OLS anchor present")
        } else {
            sol.theta[t - 1].clone()
        };
        innovations.set_row(t - first, &(&sol.theta[t] - prev).transpose());
    }

    let n_obs = system.n_obs_rows() as f64;
    let n_state = system.n_state_rows() as f64;
    let edf_obs = sol.edf_obs.unwrap_or(f64::NAN);
    let edf_state = system.n_cols() as f64 - edf_obs;
    let rss_u = residuals.norm_squared();
    let rss_v = innovations.norm_squared();
    let df_u = n_obs - edf_obs;
    let df_v = n_state - edf_state;
    let sigma_u = if df_u > 1e-9 { (rss_u / df_u).sqrt() } else { 0.0 };
    let sigma_v = if df_v > 1e-9 { (rss_v / df_v).sqrt() } else { 0.0 };

    let log_likelihood = log_likelihood(system, &sol);
    TvVarEstimate {
        k,
        p,
        markets: system.markets.clone(),
        dates: system.dates.clone(),
        a_path,
        nu: sol.nu,
        residuals,
        innovations,
        sigma_u,
        sigma_v,
        lambda: system.options.lambda,
        responses: system.responses.clone(),
        lagged: system.lagged.clone(),
        meta: TvVarMeta {
            anchor_mode: system.options.anchor,
            anchor_rank_deficient: system.anchor_rank_deficient,
            lambda_selection: selection,
            log_likelihood,
            objective: sol.objective,
            edf_obs,
            edf_state,
            condition_estimate: sol.condition_estimate,
            noise_scale_note: "sigma_u^2 = RSS_u / (kT - edf_obs); sigma_v^2 = RSS_v / (state rows - edf_state); edf_obs = trace of the observation-row hat matrix, edf_state = parameters - edf_obs".into(),
        },
    }
}

/// Solves the stacked system by block-tridiagonal normal equations.
pub fn solve_stacked(system: &StackedSystem) -> Result<TvVarEstimate> {
    let sol = solve_system(system, true)?;
    Ok(estimate_from(system, sol, "fixed".into()))
}

/// Coefficient path only; skips degrees-of-freedom bookkeeping.
pub(crate) fn solve_path(system: &StackedSystem) -> Result<Vec<Vec<DMatrix<f64>>>> {
    let sol = solve_system(system, false)?;
    Ok(sol
        .theta
        .iter()
        .map(|th| unpack(th, system.k, system.p))
        .collect())
}

/// Concentrated log-likelihood at `system`'s `lambda`.
pub fn profile_log_likelihood(system: &StackedSystem) -> Result<f64> {
    let sol = solve_system(system, false)?;
    Ok(log_likelihood(system, &sol))
}

/// `||gamma - W beta||^2` evaluated on an estimate's path.
pub fn path_roughness(system: &StackedSystem, estimate: &TvVarEstimate) -> f64 {
    let theta: Vec<DVector<f64>> = estimate
        .a_path
        .iter()
        .map(|blocks| {
            let k = estimate.k;
            DVector::from_fn(k * k * estimate.p, |idx, _| {
                let (c, r) = (idx / k, idx % k);
                blocks[c / k][(r, c % k)]
            })
        })
        .collect();
    state_penalty(system, &theta)
}

/// Log-spaced grid scaled by the pooled standard deviation of `returns`.
pub fn default_lambda_grid(returns: &ReturnsPanel) -> Vec<f64> {
    let y = returns.returns();
    let n = y.nrows() as f64;
    let mut ss = 0.0;
    for col in y.column_iter() {
        let mean = col.mean();
        ss += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    let sd = (ss / (n * y.ncols() as f64)).sqrt().max(1e-12);
    (-6..=24).map(|i| sd * 10f64.powf(i as f64 / 6.0)).collect()
}

/// Builds and solves the TV-VAR, optionally refining `lambda`.
pub fn fit_tvvar(returns: &ReturnsPanel, p: usize, opts: &TvVarOptions) -> Result<TvVarEstimate> {
    let system = build_stacked_system(returns, p, opts.system())?;
    match &opts.refinement {
        Refinement::None => solve_stacked(&system),
        Refinement::FeasibleGls => {
            let first = solve_stacked(&system)?;
            if !(first.sigma_u > 0.0 && first.sigma_v > 0.0) {
                return Err(Error::Solver(
                    "feasible GLS step needs positive noise-scale estimates".into(),
                ));
            }
            let lambda = (first.sigma_u / first.sigma_v).clamp(1e-8, 1e8);
            let refined = system.with_lambda(lambda)?;
            let sol = solve_system(&refined, true)?;
            Ok(estimate_from(
                &refined,
                sol,
                format!("feasible GLS from lambda = {}", opts.lambda),
            ))
        }
        Refinement::LikelihoodGrid(grid) => {
            if grid.is_empty() {
                return Err(Error::invalid("lambda grid is empty"));
            }
            let mut best: Option<(f64, f64)> = None;
            for &lambda in grid {
                let candidate = system.with_lambda(lambda)?;
                let ll = profile_log_likelihood(&candidate)?;
                if best.is_none_or(|(b, _)| ll > b) {
                    best = Some((ll, lambda));
                }
            }
            let (_, lambda) = best.expect("non-empty grid");
            let chosen = system.with_lambda(lambda)?;
            let sol = solve_system(&chosen, true)?;
            Ok(estimate_from(
                &chosen,
                sol,
                format!("likelihood grid ({} points)", grid.len()),
            ))
        }
    }
}
