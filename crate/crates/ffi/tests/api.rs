use boltzgrad_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    unsafe { CStr::from_ptr(bg_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn runs_an_experiment_through_handles() {
    let text = CString::new("experiment = \"zeroth\"\nd = 2\nr = [0.2, 0.1]\ntimings = false\n[thresholds]\nmax_abs_dev = [1e-6, 1e-8]\n").unwrap();
    let mut cfg = ptr::null_mut();
    let mut rec = ptr::null_mut();
    unsafe {
        assert_eq!(bg_config_from_toml(text.as_ptr(), &mut cfg), BgStatus::Ok);
        assert_eq!(bg_config_set_threads(cfg, 2), BgStatus::Ok);
        assert_eq!(bg_run_experiment(cfg, &mut rec), BgStatus::Ok);
        let mut verdict = BgVerdict::Fail;
        assert_eq!(bg_record_verdict(rec, &mut verdict), BgStatus::Ok);
        assert_eq!(verdict, BgVerdict::Pass);
        let mut n = 0;
        assert_eq!(bg_record_row_count(rec, &mut n), BgStatus::Ok);
        assert_eq!(n, 2);
        let mut row = BgRow::default();
        assert_eq!(bg_record_row(rec, 1, &mut row), BgStatus::Ok);
        assert_eq!(row.r, 0.1);
        assert!(row.lambda.is_nan());
        assert!((row.value_re - 0.25).abs() < 1e-8);
        assert_eq!(bg_record_row(rec, 2, &mut row), BgStatus::OutOfRange);
        assert!(last_error().contains("row 2"));
        let mut csv = ptr::null_mut();
        assert_eq!(bg_record_csv(rec, &mut csv), BgStatus::Ok);
        assert_eq!(CStr::from_ptr(csv).to_str().unwrap().lines().count(), 3);
        bg_string_free(csv);
        let mut jl = ptr::null_mut();
        assert_eq!(bg_record_json_lines(rec, &mut jl), BgStatus::Ok);
        assert!(CStr::from_ptr(jl).to_str().unwrap().contains("\"summary\":true"));
        bg_string_free(jl);
        bg_record_free(rec);
        bg_config_free(cfg);
    }
}

#[test]
fn reports_errors_as_codes() {
    let bad = CString::new("experiment = \"zeroth\"\nd = 2\nr = [2.0]\n").unwrap();
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(bg_config_from_toml(bad.as_ptr(), &mut cfg), BgStatus::Config);
        assert!(cfg.is_null());
        assert!(last_error().contains("(0, 1]"));
        assert_eq!(bg_config_from_toml(ptr::null(), &mut cfg), BgStatus::NullPointer);
        assert_eq!(bg_run_experiment(ptr::null(), ptr::null_mut()), BgStatus::NullPointer);
        let missing = CString::new("/nonexistent/boltzgrad.toml").unwrap();
        assert_eq!(bg_config_load(missing.as_ptr(), &mut cfg), BgStatus::Io);
        bg_config_free(ptr::null_mut());
        bg_record_free(ptr::null_mut());
        bg_gaussian_free(ptr::null_mut());
    }
}

#[test]
fn gaussian_handles() {
    let mut g = ptr::null_mut();
    let mut h = ptr::null_mut();
    let (mut re, mut im) = (0.0, 0.0);
    unsafe {
        assert_eq!(bg_gaussian_standard(4, ptr::null(), &mut g), BgStatus::Ok);
        assert_eq!(bg_gaussian_integral(g, &mut re, &mut im), BgStatus::Ok);
        assert!((re - 1.0).abs() < 1e-14 && im == 0.0);
        assert_eq!(bg_hs_pairing(g, g, &mut re, &mut im), BgStatus::Ok);
        assert!((re - 0.25).abs() < 1e-14);
        let z = [0.5, 0.0, 0.0, 0.0];
        assert_eq!(bg_gaussian_eval(g, z.as_ptr(), 4, &mut re, &mut im), BgStatus::Ok);
        assert!((re - (-std::f64::consts::PI / 4.0).exp()).abs() < 1e-15);
        assert_eq!(bg_gaussian_eval(g, z.as_ptr(), 3, &mut re, &mut im), BgStatus::Dimension);
        // Θ at large v is dominated by the m = 0 term, v^{d/2} f(0)
        let xi = [0.0; 4];
        assert_eq!(bg_theta_eval(g, 0.0, 100.0, 0.0, xi.as_ptr(), 4, &mut re, &mut im), BgStatus::Ok);
        assert!((re - 100.0).abs() < 1e-8);
        // non-definite real part is rejected
        let m = [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let w = [0.0; 4];
        assert_eq!(bg_gaussian_new(2, 1.0, 0.0, m.as_ptr(), w.as_ptr(), &mut h), BgStatus::NotPositiveDefinite);
        assert!(h.is_null());
        let m = [2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0];
        assert_eq!(bg_gaussian_new(2, 1.0, 0.0, m.as_ptr(), w.as_ptr(), &mut h), BgStatus::Ok);
        assert_eq!(bg_gaussian_integral(h, &mut re, &mut im), BgStatus::Ok);
        assert!((re - 0.5).abs() < 1e-14);
        bg_gaussian_free(h);
        bg_gaussian_free(g);
    }
}
