//! Simulation helpers and brute-force reference computations for the
//! integration tests. Nothing here calls into the estimators under test.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tvme::dataio::ReturnsPanel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

pub fn panel(y: DMatrix<f64>) -> ReturnsPanel {
    ReturnsPanel::from_matrix(y).expect("finite panel")
}

/// `t` rows of `y_t = nu + sum_i A_i y_{t-i} + scale * e_t` after a burn-in.
pub fn simulate_var(a: &[DMatrix<f64>], nu: &[f64], scale: f64, t: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let k = nu.len();
    let p = a.len();
    let burn = 200;
    let total = t + burn;
    let mut y = DMatrix::<f64>::zeros(total, k);
    for s in p..total {
        for r in 0..k {
            let mut v = nu[r] + scale * normal(rng);
            for (i, ai) in a.iter().enumerate() {
                for c in 0..k {
                    v += ai[(r, c)] * y[(s - i - 1, c)];
                }
            }
            y[(s, r)] = v;
        }
    }
    y.rows(burn, t).into_owned()
}

/// `[1, y_{t-1}', .., y_{t-p}']` and `y_t` for `t = p..T`.
pub fn lagged_design(y: &DMatrix<f64>, p: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let (t, k) = y.shape();
    let n = t - p;
    let x = DMatrix::from_fn(n, 1 + k * p, |s, c| {
        if c == 0 {
            1.0
        } else {
            let lag = (c - 1) / k + 1;
            let j = (c - 1) % k;
            y[(s + p - lag, j)]
        }
    });
    (x, y.rows(p, n).into_owned())
}

/// Full-column-rank least squares by Householder QR.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    qr.r().solve_upper_triangular(&qtb).expect("full column rank")
}

/// OLS of a VAR(p): intercept and `A_1..A_p`.
pub fn var_ols(y: &DMatrix<f64>, p: usize) -> (DVector<f64>, Vec<DMatrix<f64>>) {
    let k = y.ncols();
    let (x, resp) = lagged_design(y, p);
    let b = lstsq(&x, &resp);
    let nu = b.row(0).transpose();
    let a = (0..p)
        .map(|i| DMatrix::from_fn(k, k, |r, c| b[(1 + i * k + c, r)]))
        .collect();
    (nu, a)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}
