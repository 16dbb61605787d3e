use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use tvme_ffi::*;

/// Deterministic pseudo-returns; no RNG crate needed.
fn data(rows: usize, cols: usize) -> Vec<f64> {
    (0..rows * cols)
        .map(|i| {
            let x = i as f64;
            0.01 * (x * 0.7).sin() + 0.02 * (x * 1.93 + 0.4).cos() + 0.005 * ((x * 0.31).sin() * 11.0).sin()
        })
        .collect()
}

fn last_error() -> String {
    let p = tvme_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn returns(rows: usize, cols: usize) -> *mut TvmeReturns {
    let d = data(rows, cols);
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { tvme_returns_new(d.as_ptr(), rows, cols, &mut h) }, TvmeStatus::Ok);
    h
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(tvme_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn fit_round_trip() {
    let (rows, k) = (60, 2);
    let r = returns(rows, k);
    let (mut nr, mut nc) = (0, 0);
    assert_eq!(unsafe { tvme_returns_dims(r, &mut nr, &mut nc) }, TvmeStatus::Ok);
    assert_eq!((nr, nc), (rows, k));

    let opts = TvmeTvVarOptions {
        lambda: 2.5,
        ..tvme_tvvar_options_default()
    };
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { tvme_tvvar_fit(r, 1, &opts, &mut fit) }, TvmeStatus::Ok);
    let (mut t_eff, mut kk, mut p) = (0, 0, 0);
    assert_eq!(unsafe { tvme_tvvar_dims(fit, &mut t_eff, &mut kk, &mut p) }, TvmeStatus::Ok);
    assert_eq!((t_eff, kk, p), (rows - 1, k, 1));
    let mut lambda = 0.0;
    assert_eq!(unsafe { tvme_tvvar_lambda(fit, &mut lambda) }, TvmeStatus::Ok);
    assert_eq!(lambda, 2.5);

    let mut coefs = vec![0.0; t_eff * k * k];
    assert_eq!(
        unsafe { tvme_tvvar_coefficients(fit, coefs.as_mut_ptr(), coefs.len()) },
        TvmeStatus::Ok
    );
    let mut nu = vec![0.0; k];
    assert_eq!(unsafe { tvme_tvvar_intercept(fit, nu.as_mut_ptr(), k) }, TvmeStatus::Ok);

    // Same fit through the Rust API: the flattened layout is [t][lag][row][col].
    let y = nalgebra::DMatrix::from_row_slice(rows, k, &data(rows, k));
    let panel = tvme::dataio::ReturnsPanel::from_matrix(y).unwrap();
    let est = tvme::tvvar::fit_tvvar(
        &panel,
        1,
        &tvme::tvvar::TvVarOptions {
            lambda: 2.5,
            ..Default::default()
        },
    )
    .unwrap();
    for t in 0..t_eff {
        for r in 0..k {
            for c in 0..k {
                assert_eq!(coefs[t * k * k + r * k + c], est.a_path[t][0][(r, c)]);
            }
        }
    }
    assert_eq!(nu, est.nu.as_slice());

    let mut zeta = ptr::null_mut();
    assert_eq!(unsafe { tvme_efficiency_degree(fit, &mut zeta) }, TvmeStatus::Ok);
    let mut len = 0;
    assert_eq!(unsafe { tvme_zeta_len(zeta, &mut len) }, TvmeStatus::Ok);
    assert_eq!(len, t_eff);
    let mut z = vec![0.0; len];
    let mut flags = vec![7; len];
    let mut hi = vec![0.0; len];
    assert_eq!(
        unsafe { tvme_zeta_values(zeta, z.as_mut_ptr(), ptr::null_mut(), hi.as_mut_ptr(), flags.as_mut_ptr(), len) },
        TvmeStatus::Ok
    );
    assert!(z.iter().all(|v| *v >= 0.0));
    assert!(hi.iter().all(|v| v.is_nan()));
    assert!(flags.iter().all(|f| *f == -1));

    let band = TvmeBandOptions {
        replications: 100,
        seed: 11,
        ..tvme_band_options_default()
    };
    assert_eq!(unsafe { tvme_zeta_attach_band(zeta, fit, &band) }, TvmeStatus::Ok);
    let mut lo = vec![0.0; len];
    assert_eq!(
        unsafe { tvme_zeta_values(zeta, z.as_mut_ptr(), lo.as_mut_ptr(), hi.as_mut_ptr(), flags.as_mut_ptr(), len) },
        TvmeStatus::Ok
    );
    for t in 0..len {
        assert!(lo[t] <= hi[t]);
        assert_eq!(flags[t], (z[t] > hi[t]) as i32);
    }

    unsafe {
        tvme_zeta_free(zeta);
        tvme_tvvar_free(fit);
        tvme_returns_free(r);
    }
}

#[test]
fn bic_order_selection_with_default_options() {
    let r = returns(80, 2);
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { tvme_tvvar_fit(r, 0, ptr::null(), &mut fit) }, TvmeStatus::Ok);
    let (mut t_eff, mut k, mut p) = (0, 0, 0);
    unsafe { tvme_tvvar_dims(fit, &mut t_eff, &mut k, &mut p) };
    assert!(p >= 1);
    assert_eq!(t_eff, 80 - p);
    unsafe {
        tvme_tvvar_free(fit);
        tvme_returns_free(r);
    }
}

#[test]
fn null_pointers_are_reported() {
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { tvme_returns_new(ptr::null(), 3, 1, &mut out) },
        TvmeStatus::NullPointer
    );
    assert!(out.is_null());
    assert!(last_error().contains("null"));
    let mut fit = ptr::null_mut();
    assert_eq!(
        unsafe { tvme_tvvar_fit(ptr::null(), 1, ptr::null(), &mut fit) },
        TvmeStatus::NullPointer
    );
    let mut x = 0.0;
    assert_eq!(unsafe { tvme_tvvar_lambda(ptr::null(), &mut x) }, TvmeStatus::NullPointer);
    assert_eq!(unsafe { tvme_spectral_distance(ptr::null(), 2, &mut x) }, TvmeStatus::NullPointer);
    // freeing NULL is a no-op
    unsafe {
        tvme_returns_free(ptr::null_mut());
        tvme_tvvar_free(ptr::null_mut());
        tvme_zeta_free(ptr::null_mut());
    }
}

#[test]
fn small_buffers_are_rejected() {
    let r = returns(30, 2);
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { tvme_tvvar_fit(r, 1, ptr::null(), &mut fit) }, TvmeStatus::Ok);
    let mut buf = vec![0.0; 3];
    assert_eq!(
        unsafe { tvme_tvvar_coefficients(fit, buf.as_mut_ptr(), buf.len()) },
        TvmeStatus::BufferTooSmall
    );
    assert!(last_error().contains("needed"));
    assert_eq!(unsafe { tvme_tvvar_intercept(fit, buf.as_mut_ptr(), 1) }, TvmeStatus::BufferTooSmall);
    unsafe {
        tvme_tvvar_free(fit);
        tvme_returns_free(r);
    }
}

#[test]
fn invalid_arguments_and_data() {
    let r = returns(30, 1);
    let opts = TvmeTvVarOptions {
        lambda: -1.0,
        ..tvme_tvvar_options_default()
    };
    let mut fit = ptr::null_mut();
    let status = unsafe { tvme_tvvar_fit(r, 1, &opts, &mut fit) };
    assert_ne!(status, TvmeStatus::Ok);
    assert!(fit.is_null());
    assert!(!last_error().is_empty());

    let band = TvmeBandOptions {
        replications: 5,
        ..tvme_band_options_default()
    };
    let mut fit = ptr::null_mut();
    assert_eq!(unsafe { tvme_tvvar_fit(r, 1, ptr::null(), &mut fit) }, TvmeStatus::Ok);
    let mut zeta = ptr::null_mut();
    assert_eq!(unsafe { tvme_efficiency_degree(fit, &mut zeta) }, TvmeStatus::Ok);
    assert_eq!(
        unsafe { tvme_zeta_attach_band(zeta, fit, &band) },
        TvmeStatus::InvalidArgument
    );

    let nan = [f64::NAN, 0.0];
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { tvme_returns_new(nan.as_ptr(), 2, 1, &mut h) }, TvmeStatus::DataError);

    let path = CString::new("/nonexistent/prices.csv").unwrap();
    assert_eq!(unsafe { tvme_returns_load_csv(path.as_ptr(), 1, &mut h) }, TvmeStatus::IoError);
    unsafe {
        tvme_zeta_free(zeta);
        tvme_tvvar_free(fit);
        tvme_returns_free(r);
    }
}

#[test]
fn load_csv_prices() {
    let dir = std::env::temp_dir().join(format!("tvme-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let file = dir.join("p.csv");
    std::fs::write(&file, "date,US,CA\n2000-01,100,50\n2000-02,110,50\n2000-03,121,50\n").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { tvme_returns_load_csv(path.as_ptr(), 1, &mut h) }, TvmeStatus::Ok);
    let (mut rows, mut cols) = (0, 0);
    unsafe { tvme_returns_dims(h, &mut rows, &mut cols) };
    assert_eq!((rows, cols), (2, 2));
    unsafe { tvme_returns_free(h) };
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn multiplier_and_distance() {
    // A = [[0.5, 0], [0, 0.2]] -> Phi = diag(2, 1.25), ||Phi - I|| = 1
    let a = [0.5, 0.0, 0.0, 0.2];
    let mut phi = [0.0; 4];
    assert_eq!(unsafe { tvme_long_run_multiplier(a.as_ptr(), 2, 1, phi.as_mut_ptr()) }, TvmeStatus::Ok);
    assert!((phi[0] - 2.0).abs() < 1e-14 && (phi[3] - 1.25).abs() < 1e-14);
    assert_eq!(phi[1], 0.0);
    let mut d = 0.0;
    assert_eq!(unsafe { tvme_spectral_distance(phi.as_ptr(), 2, &mut d) }, TvmeStatus::Ok);
    assert!((d - 1.0).abs() < 1e-14);

    // upper triangular A keeps the row-major orientation visible
    let a = [0.0, 0.5, 0.0, 0.0];
    unsafe { tvme_long_run_multiplier(a.as_ptr(), 2, 1, phi.as_mut_ptr()) };
    assert_eq!(phi, [1.0, 0.5, 0.0, 1.0]);

    let unit = [1.0];
    let mut out = [0.0];
    assert_eq!(
        unsafe { tvme_long_run_multiplier(unit.as_ptr(), 1, 1, out.as_mut_ptr()) },
        TvmeStatus::NumericalError
    );
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { tvme_long_run_multiplier(unit.as_ptr(), 0, 1, out.as_mut_ptr()) },
        TvmeStatus::InvalidArgument
    );
}

#[test]
fn header_is_valid_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/tvme.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["tvme_tvvar_fit", "tvme_zeta_values", "TVME_STATUS_BUFFER_TOO_SMALL"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(status) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&header)
            .status()
        else {
            eprintln!("{compiler} not available; skipping");
            continue;
        };
        assert!(status.success(), "{compiler} rejected the header");
    }
}
