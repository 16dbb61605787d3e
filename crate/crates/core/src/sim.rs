//! Seeded random streams for replication loops.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Generator for replication `rep`: the base seed picks the key, the
/// replication index picks the stream, so results do not depend on scheduling.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `rows x k` i.i.d. draws from `N(mean, L L')` given the lower Cholesky factor.
pub(crate) fn gaussian_panel(
    rng: &mut ChaCha8Rng,
    rows: usize,
    mean: &DVector<f64>,
    chol_lower: &DMatrix<f64>,
) -> DMatrix<f64> {
    let k = mean.len();
    let mut out = DMatrix::zeros(rows, k);
    let mut z = DVector::zeros(k);
    for t in 0..rows {
        for v in z.iter_mut() {
            *v = standard_normal(rng);
        }
        let draw = mean + chol_lower * &z;
        out.set_row(t, &draw.transpose());
    }
    out
}
