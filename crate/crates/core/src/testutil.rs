use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataio::ReturnsPanel;

/// Gaussian VAR(p) sample after a 100-period burn-in.
pub(crate) fn simulate_var(
    a: &[DMatrix<f64>],
    nu: &[f64],
    scale: f64,
    t: usize,
    seed: u64,
) -> ReturnsPanel {
    let k = nu.len();
    let p = a.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let burn = 100;
    let mut y = DMatrix::zeros(t + burn, k);
    for s in p..t + burn {
        for i in 0..k {
            let e: f64 = StandardNormal.sample(&mut rng);
            let mut v = nu[i] + scale * e;
            for (lag, al) in a.iter().enumerate() {
                for j in 0..k {
                    v += al[(i, j)] * y[(s - lag - 1, j)];
                }
            }
            y[(s, i)] = v;
        }
    }
    ReturnsPanel::from_matrix(y.rows(burn, t).into_owned()).unwrap()
}
