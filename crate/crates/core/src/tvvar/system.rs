use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataio::ReturnsPanel;
use crate::error::{Error, Result};
use crate::linalg::{least_squares, min_norm_least_squares};
use crate::var::{regressor_names, var_design};

/// Treatment of the first coefficient state `vec(A_1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMode {
    /// `vec(A_1) - vec(A_0)` is penalised, with `A_0` the full-sample OLS estimate.
    Ols,
    /// No state row for `t = 1`; the path level is left to the data.
    Diffuse,
}

impl std::str::FromStr for AnchorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ols" => Ok(AnchorMode::Ols),
            "diffuse" => Ok(AnchorMode::Diffuse),
            _ => Err(Error::invalid(format!("unknown anchor mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemOptions {
    /// Weight of the state rows relative to the observation rows.
    pub lambda: f64,
    pub anchor: AnchorMode,
}

impl Default for SystemOptions {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            anchor: AnchorMode::Ols,
        }
    }
}

/// The stacked observation and state equations
///
/// ```text
/// [ y     ]   [ D    1 (x) I_k ] [ beta ]   [ u        ]
/// [ lam*g ] = [ lam*W     0    ] [ nu   ] + [ lam*v    ]
/// ```
///
/// with `beta = (vec(A_1)', .., vec(A_T)')'`. Only the per-period regressors
/// are stored; dense matrices are materialised on request for small checks.
#[derive(Debug, Clone)]
pub struct StackedSystem {
    pub(crate) k: usize,
    pub(crate) p: usize,
    /// `T_eff x k p`, row `t` is `Z_{t-1}'`.
    pub(crate) lagged: DMatrix<f64>,
    /// `T_eff x k`.
    pub(crate) responses: DMatrix<f64>,
    /// `vec(A_0)` for [`AnchorMode::Ols`].
    pub(crate) anchor: Option<DVector<f64>>,
    pub(crate) anchor_rank_deficient: bool,
    pub(crate) options: SystemOptions,
    pub(crate) markets: Vec<String>,
    pub(crate) dates: Vec<String>,
}

impl StackedSystem {
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn p(&self) -> usize {
        self.p
    }
    pub fn t_eff(&self) -> usize {
        self.lagged.nrows()
    }
    pub fn options(&self) -> SystemOptions {
        self.options
    }
    pub fn anchor(&self) -> Option<&DVector<f64>> {
        self.anchor.as_ref()
    }
    /// Coefficients per period, `k^2 p`.
    pub fn state_dim(&self) -> usize {
        self.k * self.k * self.p
    }
    /// `k^2 p T_eff + k`.
    pub fn n_cols(&self) -> usize {
        self.state_dim() * self.t_eff() + self.k
    }
    pub fn n_obs_rows(&self) -> usize {
        self.k * self.t_eff()
    }
    pub fn n_state_rows(&self) -> usize {
        match self.options.anchor {
            AnchorMode::Ols => self.state_dim() * self.t_eff(),
            AnchorMode::Diffuse => self.state_dim() * (self.t_eff() - 1),
        }
    }

    /// Same data, different smoothing ratio.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let mut s = self.clone();
        s.options.lambda = lambda;
        Ok(s)
    }

    /// Observation design `[D, 1 (x) I_k]`, `k T_eff x (k^2 p T_eff + k)`.
    pub fn design_dense(&self) -> DMatrix<f64> {
        let (k, n, t_eff) = (self.k, self.state_dim(), self.t_eff());
        let mut d = DMatrix::zeros(self.n_obs_rows(), self.n_cols());
        for t in 0..t_eff {
            for r in 0..k {
                let row = t * k + r;
                for c in 0..k * self.p {
                    d[(row, t * n + c * k + r)] = self.lagged[(t, c)];
                }
                d[(row, n * t_eff + r)] = 1.0;
            }
        }
        d
    }

    /// First-difference operator `W` (unweighted), with zero intercept columns.
    pub fn difference_dense(&self) -> DMatrix<f64> {
        let (n, t_eff) = (self.state_dim(), self.t_eff());
        let mut w = DMatrix::zeros(self.n_state_rows(), self.n_cols());
        let first = match self.options.anchor {
            AnchorMode::Ols => 0,
            AnchorMode::Diffuse => 1,
        };
        for (block, t) in (first..t_eff).enumerate() {
            for i in 0..n {
                w[(block * n + i, t * n + i)] = 1.0;
                if t > 0 {
                    w[(block * n + i, (t - 1) * n + i)] = -1.0;
                }
            }
        }
        w
    }

    /// Right-hand side of the state rows: the anchor followed by zeros.
    pub fn gamma(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.n_state_rows());
        if let Some(a) = &self.anchor {
            g.rows_mut(0, a.len()).copy_from(a);
        }
        g
    }

    /// `(y_1', .., y_T')'`.
    pub fn y_stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_obs_rows(),
            self.responses.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()),
        )
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive and finite, got {lambda}")));
    }
    Ok(())
}

/// `vec` of `[A_1 .. A_p]` from a stacked OLS coefficient matrix.
fn anchor_from_coef(coef: &DMatrix<f64>, k: usize, p: usize) -> DVector<f64> {
    DVector::from_fn(k * k * p, |idx, _| {
        let (c, r) = (idx / k, idx % k);
        coef[(1 + c, r)]
    })
}

/// Assembles the stacked regression for a TV-VAR(p) on `returns`.
pub fn build_stacked_system(
    returns: &ReturnsPanel,
    p: usize,
    opts: SystemOptions,
) -> Result<StackedSystem> {
    check_lambda(opts.lambda)?;
    if p == 0 {
        return Err(Error::invalid("VAR lag order must be at least 1"));
    }
    let y = returns.returns();
    let (t_total, k) = y.shape();
    if t_total <= p {
        return Err(Error::InsufficientData {
            what: "TV-VAR",
            needed: p + 1,
            got: t_total,
        });
    }
    if opts.anchor == AnchorMode::Diffuse && t_total - p < 2 {
        return Err(Error::InsufficientData {
            what: "TV-VAR with diffuse anchor",
            needed: p + 2,
            got: t_total,
        });
    }
    let (x, yy) = var_design(y, p, p);
    let lagged = x.columns(1, k * p).into_owned();
    let (anchor, anchor_rank_deficient) = match opts.anchor {
        AnchorMode::Diffuse => (None, false),
        AnchorMode::Ols => {
            let names = regressor_names(returns.markets(), p);
            match least_squares(&x, &yy, &names) {
                Ok(fit) => (Some(anchor_from_coef(&fit.coef, k, p)), false),
                Err(Error::RankDeficient { .. }) | Err(Error::InsufficientData { .. }) => {
                    let coef = min_norm_least_squares(&x, &yy)?;
                    (Some(anchor_from_coef(&coef, k, p)), true)
                }
                Err(e) => return Err(e),
            }
        }
    };
    let labels = returns.date_labels();
    Ok(StackedSystem {
        k,
        p,
        lagged,
        responses: yy,
        anchor,
        anchor_rank_deficient,
        options: opts,
        markets: returns.markets().to_vec(),
        dates: labels[p..].to_vec(),
    })
}
