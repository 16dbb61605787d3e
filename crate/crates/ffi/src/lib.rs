//! C interface to `tvme`.
//!
//! Every fallible function returns a [`TvmeStatus`]; on failure the message
//! is available from [`tvme_last_error_message`] on the same thread. Objects
//! cross the boundary as opaque handles that must be released with the
//! matching `_free` function. Matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use tvme::dataio::{load_price_panel, load_returns_panel, to_log_returns, PanelLayout, ReturnsPanel};
use tvme::efficiency::{
    bootstrap_band, efficiency_degree, long_run_multiplier, mc_band, spectral_distance,
    BandOptions, NullMoments, ZetaSeries, DEFAULT_CONDITION_CAP,
};
use tvme::tvvar::{default_lambda_grid, fit_tvvar, AnchorMode, Refinement, TvVarEstimate, TvVarOptions};
use tvme::var::{feasible_pmax, select_var_lag_bic, DEFAULT_PMAX};
use tvme::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvmeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed or inadequate input data.
    DataError = 3,
    /// Singular or rank-deficient system.
    NumericalError = 4,
    IoError = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvmeAnchor {
    Ols = 0,
    Diffuse = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvmeRefinement {
    None = 0,
    FeasibleGls = 1,
    LikelihoodGrid = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvmeBandMethod {
    /// Gaussian null panels with the sample mean and covariance.
    MonteCarlo = 0,
    /// Gaussian null panels with zero mean and identity covariance.
    MonteCarloIdentity = 1,
    Bootstrap = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TvmeTvVarOptions {
    pub lambda: f64,
    pub anchor: TvmeAnchor,
    pub refinement: TvmeRefinement,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TvmeBandOptions {
    pub method: TvmeBandMethod,
    pub replications: usize,
    pub level: f64,
    pub seed: u64,
}

/// Aligned returns panel.
pub struct TvmeReturns {
    inner: ReturnsPanel,
}

/// Fitted time-varying VAR, together with the panel it was fitted on.
pub struct TvmeTvVar {
    estimate: TvVarEstimate,
    returns: ReturnsPanel,
    options: TvVarOptions,
}

/// Degree of market efficiency per period, optionally with a band.
pub struct TvmeZeta {
    inner: ZetaSeries,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> TvmeStatus {
    match err {
        Error::Io { .. } => TvmeStatus::IoError,
        Error::Parse { .. } | Error::Domain(_) | Error::Frequency(_) | Error::InsufficientData { .. } => {
            TvmeStatus::DataError
        }
        Error::RankDeficient { .. } | Error::Singular { .. } | Error::Solver(_) => TvmeStatus::NumericalError,
        Error::InvalidArgument(_) => TvmeStatus::InvalidArgument,
    }
}

struct Fail(TvmeStatus);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        set_error(e.to_string());
        Fail(status_of(&e))
    }
}

fn fail(status: TvmeStatus, msg: &str) -> Fail {
    set_error(msg);
    Fail(status)
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TvmeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TvmeStatus::Ok,
        Ok(Err(Fail(status))) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            TvmeStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    // SAFETY: callers pass handles obtained from this library or null.
    unsafe { p.as_ref() }.ok_or_else(|| fail(TvmeStatus::NullPointer, "null pointer argument"))
}

fn write_out<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(fail(TvmeStatus::NullPointer, "null output pointer"));
    }
    // SAFETY: checked non-null; the caller provides writable storage.
    unsafe { out.write(value) };
    Ok(())
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, needed: usize) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(fail(TvmeStatus::NullPointer, "null output buffer"));
    }
    if len < needed {
        return Err(fail(
            TvmeStatus::BufferTooSmall,
            &format!("buffer holds {len} values, {needed} needed"),
        ));
    }
    // SAFETY: the caller guarantees `p` points to `len` writable doubles.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

unsafe fn in_slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(fail(TvmeStatus::NullPointer, "null input buffer"));
    }
    // SAFETY: the caller guarantees `p` points to `len` readable doubles.
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

fn row_major(data: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tvme_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tvme_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Panel from a row-major `rows x cols` array of returns, with synthetic
/// monthly dates.
///
/// # Safety
/// `data` must point to `rows * cols` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tvme_returns_new(
    data: *const f64,
    rows: usize,
    cols: usize,
    out: *mut *mut TvmeReturns,
) -> TvmeStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| fail(TvmeStatus::InvalidArgument, "dimensions overflow"))?;
        let values = unsafe { in_slice(data, len) }?;
        let inner = ReturnsPanel::from_matrix(row_major(values, rows, cols))?;
        write_out(out, Box::into_raw(Box::new(TvmeReturns { inner })))
    })
}

/// Reads a monthly CSV panel. With `is_prices` non-zero the cells are price
/// levels and are converted to log returns.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tvme_returns_load_csv(
    path: *const c_char,
    is_prices: c_int,
    out: *mut *mut TvmeReturns,
) -> TvmeStatus {
    guard(|| {
        if path.is_null() {
            return Err(fail(TvmeStatus::NullPointer, "null path"));
        }
        let path = unsafe { CStr::from_ptr(path) }
            .to_str()
            .map_err(|_| fail(TvmeStatus::InvalidArgument, "path is not UTF-8"))?;
        let layout = PanelLayout::default();
        let inner = if is_prices != 0 {
            to_log_returns(&load_price_panel(path, &layout)?)?
        } else {
            load_returns_panel(path, &layout)?
        };
        write_out(out, Box::into_raw(Box::new(TvmeReturns { inner })))
    })
}

/// # Safety
/// `returns` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn tvme_returns_dims(
    returns: *const TvmeReturns,
    rows: *mut usize,
    cols: *mut usize,
) -> TvmeStatus {
    guard(|| {
        let r = unsafe { deref(returns) }?;
        write_out(rows, r.inner.len())?;
        write_out(cols, r.inner.n_markets())
    })
}

/// # Safety
/// `returns` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tvme_returns_free(returns: *mut TvmeReturns) {
    if !returns.is_null() {
        // SAFETY: handle was produced by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(returns) });
    }
}

#[no_mangle]
pub extern "C" fn tvme_tvvar_options_default() -> TvmeTvVarOptions {
    TvmeTvVarOptions {
        lambda: 1.0,
        anchor: TvmeAnchor::Ols,
        refinement: TvmeRefinement::None,
    }
}

/// Fits the time-varying VAR. `p = 0` selects the order by BIC.
///
/// # Safety
/// `returns` must be a live handle; `options` may be NULL for defaults.
#[no_mangle]
pub unsafe extern "C" fn tvme_tvvar_fit(
    returns: *const TvmeReturns,
    p: usize,
    options: *const TvmeTvVarOptions,
    out: *mut *mut TvmeTvVar,
) -> TvmeStatus {
    guard(|| {
        let r = &unsafe { deref(returns) }?.inner;
        let o = unsafe { options.as_ref() }
            .copied()
            .unwrap_or_else(|| tvme_tvvar_options_default());
        let p = if p == 0 {
            let pmax = feasible_pmax(r.len(), r.n_markets(), DEFAULT_PMAX);
            if pmax == 0 {
                return Err(fail(TvmeStatus::DataError, "sample too short for any VAR order"));
            }
            select_var_lag_bic(r, pmax)?
        } else {
            p
        };
        let options = TvVarOptions {
            lambda: o.lambda,
            anchor: match o.anchor {
                TvmeAnchor::Ols => AnchorMode::Ols,
                TvmeAnchor::Diffuse => AnchorMode::Diffuse,
            },
            refinement: match o.refinement {
                TvmeRefinement::None => Refinement::None,
                TvmeRefinement::FeasibleGls => Refinement::FeasibleGls,
                TvmeRefinement::LikelihoodGrid => Refinement::LikelihoodGrid(default_lambda_grid(r)),
            },
        };
        let estimate = fit_tvvar(r, p, &options)?;
        let handle = TvmeTvVar {
            estimate,
            returns: r.clone(),
            options,
        };
        write_out(out, Box::into_raw(Box::new(handle)))
    })
}

/// Effective sample length, number of markets and VAR order.
///
/// # Safety
/// `fit` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn tvme_tvvar_dims(
    fit: *const TvmeTvVar,
    t_eff: *mut usize,
    k: *mut usize,
    p: *mut usize,
) -> TvmeStatus {
    guard(|| {
        let e = &unsafe { deref(fit) }?.estimate;
        write_out(t_eff, e.t_eff())?;
        write_out(k, e.k)?;
        write_out(p, e.p)
    })
}

/// Smoothing ratio actually used (after any refinement).
///
/// # Safety
/// `fit` must be a live handle; `lambda` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tvme_tvvar_lambda(fit: *const TvmeTvVar, lambda: *mut f64) -> TvmeStatus {
    guard(|| write_out(lambda, unsafe { deref(fit) }?.estimate.lambda))
}

/// Coefficient path as `[t][lag][row][col]`, `t_eff * p * k * k` values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tvme_tvvar_coefficients(fit: *const TvmeTvVar, out: *mut f64, len: usize) -> TvmeStatus {
    guard(|| {
        let e = &unsafe { deref(fit) }?.estimate;
        let k = e.k;
        let buf = unsafe { out_slice(out, len, e.t_eff() * e.p * k * k) }?;
        let mut i = 0;
        for blocks in &e.a_path {
            for b in blocks {
                for r in 0..k {
                    for c in 0..k {
                        buf[i] = b[(r, c)];
                        i += 1;
                    }
                }
            }
        }
        Ok(())
    })
}

/// Time-invariant intercept, `k` values.
///
/// # Safety
/// `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tvme_tvvar_intercept(fit: *const TvmeTvVar, out: *mut f64, len: usize) -> TvmeStatus {
    guard(|| {
        let e = &unsafe { deref(fit) }?.estimate;
        let buf = unsafe { out_slice(out, len, e.k) }?;
        buf[..e.k].copy_from_slice(e.nu.as_slice());
        Ok(())
    })
}

/// # Safety
/// `fit` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tvme_tvvar_free(fit: *mut TvmeTvVar) {
    if !fit.is_null() {
        // SAFETY: handle was produced by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(fit) });
    }
}

/// `zeta_t` for every period of the fit; undefined periods are NaN.
///
/// # Safety
/// `fit` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tvme_efficiency_degree(fit: *const TvmeTvVar, out: *mut *mut TvmeZeta) -> TvmeStatus {
    guard(|| {
        let e = &unsafe { deref(fit) }?.estimate;
        let inner = efficiency_degree(e);
        write_out(out, Box::into_raw(Box::new(TvmeZeta { inner })))
    })
}

#[no_mangle]
pub extern "C" fn tvme_band_options_default() -> TvmeBandOptions {
    TvmeBandOptions {
        method: TvmeBandMethod::MonteCarlo,
        replications: 5000,
        level: 0.99,
        seed: 0,
    }
}

/// Simulates the null band for `zeta` using the settings of `fit`.
///
/// # Safety
/// `zeta` and `fit` must be live handles; `options` may be NULL for defaults.
#[no_mangle]
pub unsafe extern "C" fn tvme_zeta_attach_band(
    zeta: *mut TvmeZeta,
    fit: *const TvmeTvVar,
    options: *const TvmeBandOptions,
) -> TvmeStatus {
    guard(|| {
        let f = unsafe { deref(fit) }?;
        let z = unsafe { zeta.as_mut() }.ok_or_else(|| fail(TvmeStatus::NullPointer, "null zeta handle"))?;
        let o = unsafe { options.as_ref() }
            .copied()
            .unwrap_or_else(|| tvme_band_options_default());
        let est = &f.estimate;
        let opts = BandOptions {
            replications: o.replications,
            level: o.level,
            seed: o.seed,
            tvvar: f.options.resolved(est.lambda),
            condition_cap: DEFAULT_CONDITION_CAP,
        };
        let band = match o.method {
            TvmeBandMethod::MonteCarlo => {
                mc_band(est.t_eff(), est.p, &NullMoments::from_returns(&f.returns)?, &opts)?
            }
            TvmeBandMethod::MonteCarloIdentity => mc_band(est.t_eff(), est.p, &NullMoments::identity(est.k), &opts)?,
            TvmeBandMethod::Bootstrap => bootstrap_band(est, &opts)?,
        };
        z.inner = z.inner.clone().with_band(band)?;
        Ok(())
    })
}

/// # Safety
/// `zeta` must be a live handle; `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tvme_zeta_len(zeta: *const TvmeZeta, len: *mut usize) -> TvmeStatus {
    guard(|| write_out(len, unsafe { deref(zeta) }?.inner.len()))
}

/// Copies the series into caller buffers of `len` entries each. `band_lo`,
/// `band_hi` and `inefficient` may be NULL; without a band they receive NaN
/// and -1. Undefined `zeta_t` is NaN and its flag -1.
///
/// # Safety
/// Non-NULL buffers must hold `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn tvme_zeta_values(
    zeta: *const TvmeZeta,
    values: *mut f64,
    band_lo: *mut f64,
    band_hi: *mut f64,
    inefficient: *mut c_int,
    len: usize,
) -> TvmeStatus {
    guard(|| {
        let s = &unsafe { deref(zeta) }?.inner;
        let n = s.len();
        let vals = unsafe { out_slice(values, len, n) }?;
        for (v, z) in vals.iter_mut().zip(&s.zeta) {
            *v = z.unwrap_or(f64::NAN);
        }
        for (ptr, band) in [(band_lo, &s.band_lo), (band_hi, &s.band_hi)] {
            if !ptr.is_null() {
                let buf = unsafe { out_slice(ptr, len, n) }?;
                for t in 0..n {
                    buf[t] = band.as_ref().map_or(f64::NAN, |b| b[t]);
                }
            }
        }
        if !inefficient.is_null() {
            if len < n {
                return Err(fail(TvmeStatus::BufferTooSmall, "inefficiency buffer too small"));
            }
            // SAFETY: caller guarantees `len` writable ints.
            let flags = unsafe { std::slice::from_raw_parts_mut(inefficient, len) };
            for (f, v) in flags.iter_mut().zip(&s.inefficient) {
                *f = v.map_or(-1, c_int::from);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `zeta` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tvme_zeta_free(zeta: *mut TvmeZeta) {
    if !zeta.is_null() {
        // SAFETY: handle was produced by Box::into_raw in this crate.
        drop(unsafe { Box::from_raw(zeta) });
    }
}

/// `(I - A_1 - .. - A_p)^{-1}` from `p` row-major `k x k` blocks stored
/// consecutively; writes a row-major `k x k` result.
///
/// # Safety
/// `blocks` must hold `p * k * k` doubles and `out` `k * k`.
#[no_mangle]
pub unsafe extern "C" fn tvme_long_run_multiplier(
    blocks: *const f64,
    k: usize,
    p: usize,
    out: *mut f64,
) -> TvmeStatus {
    guard(|| {
        if k == 0 || p == 0 {
            return Err(fail(TvmeStatus::InvalidArgument, "k and p must be positive"));
        }
        let data = unsafe { in_slice(blocks, p * k * k) }?;
        let mats: Vec<DMatrix<f64>> = data.chunks(k * k).map(|c| row_major(c, k, k)).collect();
        let phi = long_run_multiplier(&mats, DEFAULT_CONDITION_CAP)?;
        let buf = unsafe { out_slice(out, k * k, k * k) }?;
        for r in 0..k {
            for c in 0..k {
                buf[r * k + c] = phi[(r, c)];
            }
        }
        Ok(())
    })
}

/// `||Phi - I||_2` for a row-major `k x k` matrix.
///
/// # Safety
/// `phi` must hold `k * k` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tvme_spectral_distance(phi: *const f64, k: usize, out: *mut f64) -> TvmeStatus {
    guard(|| {
        if k == 0 {
            return Err(fail(TvmeStatus::InvalidArgument, "k must be positive"));
        }
        let data = unsafe { in_slice(phi, k * k) }?;
        write_out(out, spectral_distance(&row_major(data, k, k))?)
    })
}
