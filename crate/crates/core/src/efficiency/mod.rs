//! Long-run multiplier `Phi_t(1) = (I - A_{1,t} - .. - A_{p,t})^{-1}` and the
//! degree of market efficiency `zeta_t = ||Phi_t(1) - I||_2`.

mod band;

pub use band::{
    bootstrap_band, mc_band, simulate_bootstrap_null, simulate_mc_null, Band, BandMeta,
    BandMethod, BandOptions, NullDistribution, NullMoments,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::condition_number;
use crate::tvvar::TvVarEstimate;

/// Largest accepted condition number of `I - sum A_i`.
pub const DEFAULT_CONDITION_CAP: f64 = 1e10;

/// `(I - A_1 - .. - A_p)^{-1}`; fails when the sum is (nearly) singular.
pub fn long_run_multiplier(blocks: &[DMatrix<f64>], condition_cap: f64) -> Result<DMatrix<f64>> {
    let k = blocks
        .first()
        .map(|b| b.nrows())
        .ok_or_else(|| Error::invalid("no coefficient blocks"))?;
    let mut m = DMatrix::<f64>::identity(k, k);
    for b in blocks {
        if b.shape() != (k, k) {
            return Err(Error::invalid("coefficient blocks must all be k x k"));
        }
        m -= b;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite coefficient".into()));
    }
    let cond = condition_number(&m);
    if !(cond <= condition_cap) {
        return Err(Error::Singular {
            context: "I - sum of VAR coefficient matrices".into(),
            condition: cond,
        });
    }
    m.try_inverse().ok_or(Error::Singular {
        context: "I - sum of VAR coefficient matrices".into(),
        condition: cond,
    })
}

/// Square root of the largest eigenvalue of `(Phi - I)'(Phi - I)`.
pub fn spectral_distance(phi: &DMatrix<f64>) -> Result<f64> {
    if !phi.is_square() {
        return Err(Error::invalid("long-run multiplier must be square"));
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("long-run multiplier has non-finite entries".into()));
    }
    let k = phi.nrows();
    let d = phi - DMatrix::<f64>::identity(k, k);
    let gram = d.transpose() * &d;
    let top = gram
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    Ok(top.sqrt())
}

/// `zeta_t` over the sample, with an optional null band.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZetaSeries {
    pub dates: Vec<String>,
    /// `None` where `I - sum A_i` is singular at `t`.
    pub zeta: Vec<Option<f64>>,
    pub diagnostics: Vec<Option<String>>,
    pub band_lo: Option<Vec<f64>>,
    pub band_hi: Option<Vec<f64>>,
    /// `zeta_t > band_hi_t`; `None` without a band or where `zeta_t` is undefined.
    pub inefficient: Vec<Option<bool>>,
    pub band_meta: Option<BandMeta>,
}

impl ZetaSeries {
    pub fn len(&self) -> usize {
        self.zeta.len()
    }
    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }

    /// Attaches `band` and recomputes the inefficiency flags.
    pub fn with_band(mut self, band: Band) -> Result<Self> {
        if band.lo.len() != self.zeta.len() {
            return Err(Error::invalid(format!(
                "band has {} periods, series has {}",
                band.lo.len(),
                self.zeta.len()
            )));
        }
        self.inefficient = self
            .zeta
            .iter()
            .zip(&band.hi)
            .map(|(z, hi)| z.map(|z| z > *hi))
            .collect();
        self.band_lo = Some(band.lo);
        self.band_hi = Some(band.hi);
        self.band_meta = Some(band.meta);
        Ok(self)
    }
}

/// `zeta_t` per period, or `None` when the multiplier is undefined.
pub(crate) fn zeta_path(a_path: &[Vec<DMatrix<f64>>], condition_cap: f64) -> Vec<Result<f64>> {
    a_path
        .iter()
        .map(|blocks| long_run_multiplier(blocks, condition_cap).and_then(|phi| spectral_distance(&phi)))
        .collect()
}

/// Degree of market efficiency at every period of a TV-VAR estimate.
pub fn efficiency_degree(estimate: &TvVarEstimate) -> ZetaSeries {
    efficiency_degree_with_cap(estimate, DEFAULT_CONDITION_CAP)
}

pub fn efficiency_degree_with_cap(estimate: &TvVarEstimate, condition_cap: f64) -> ZetaSeries {
    let results = zeta_path(&estimate.a_path, condition_cap);
    let n = results.len();
    let mut zeta = Vec::with_capacity(n);
    let mut diagnostics = Vec::with_capacity(n);
    for r in results {
        match r {
            Ok(z) => {
                zeta.push(Some(z));
                diagnostics.push(None);
            }
            Err(e) => {
                zeta.push(None);
                diagnostics.push(Some(e.to_string()));
            }
        }
    }
    ZetaSeries {
        dates: estimate.dates.clone(),
        zeta,
        diagnostics,
        band_lo: None,
        band_hi: None,
        inefficient: vec![None; n],
        band_meta: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coefficients_give_identity() {
        let phi = long_run_multiplier(&[DMatrix::zeros(3, 3)], DEFAULT_CONDITION_CAP).unwrap();
        assert_eq!(phi, DMatrix::identity(3, 3));
        assert_eq!(spectral_distance(&phi).unwrap(), 0.0);
    }

    #[test]
    fn scalar_geometric_sum() {
        let phi = long_run_multiplier(&[DMatrix::from_element(1, 1, 0.5)], 1e10).unwrap();
        assert!((phi[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((spectral_distance(&phi).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_distance() {
        let phi = DMatrix::from_row_slice(2, 2, &[1.3, 0.0, 0.0, 0.9]);
        assert!((spectral_distance(&phi).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn lag_blocks_are_summed() {
        let a1 = DMatrix::from_element(1, 1, 0.25);
        let a2 = DMatrix::from_element(1, 1, 0.25);
        let phi = long_run_multiplier(&[a1, a2], 1e10).unwrap();
        assert!((phi[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn unit_root_sum_is_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.2]);
        assert!(matches!(
            long_run_multiplier(&[a], DEFAULT_CONDITION_CAP),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let phi = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(spectral_distance(&phi), Err(Error::Domain(_))));
    }

    #[test]
    fn scalar_closed_form_along_a_path() {
        let path: Vec<Vec<DMatrix<f64>>> = (0..50)
            .map(|t| vec![DMatrix::from_element(1, 1, -0.6 + 0.025 * t as f64)])
            .collect();
        for (t, z) in zeta_path(&path, 1e10).into_iter().enumerate() {
            let a = -0.6 + 0.025 * t as f64;
            let expect = (a / (1.0 - a)).abs();
            assert!((z.unwrap() - expect).abs() < 1e-10);
        }
    }
}
