//! C ABI over the boltzgrad engine.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns a
//! [`BgStatus`]; the message of the last failure on the calling thread is
//! available from [`bg_last_error`].

use boltzgrad::harness::{run_experiment, to_csv, to_json_lines, ConvergenceRecord, ExperimentConfig, Status};
use boltzgrad::modular::GroupElement;
use boltzgrad::phasespace::hs_pairing;
use boltzgrad::smallmat::CMat;
use boltzgrad::symbolcalc::ComplexGaussian;
use boltzgrad::theta::{theta_eval, THETA_EPS};
use boltzgrad::BoltzError;
use num_complex::Complex64;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

/// Result codes. `Ok` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Dimension = 4,
    NotPositiveDefinite = 5,
    Truncation = 6,
    Numerical = 7,
    Config = 8,
    Excluded = 9,
    Io = 10,
    OutOfRange = 11,
    Panic = 12,
}

/// Verdict of an experiment record.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BgVerdict {
    Pass = 0,
    Fail = 1,
    Excluded = 2,
}

/// Parsed, validated experiment configuration.
pub struct BgConfig(ExperimentConfig);

/// Result of one experiment run.
pub struct BgRecord(ConvergenceRecord);

/// Complex Gaussian `c·exp(−π zᵀMz + wᵀz)`.
pub struct BgGaussian(ComplexGaussian);

/// One output row. `lambda` is NaN outside the λ-sweep.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BgRow {
    pub d: usize,
    pub r: f64,
    pub lambda: f64,
    pub value_re: f64,
    pub value_im: f64,
    pub limit_re: f64,
    pub limit_im: f64,
    pub abs_dev: f64,
    pub rel_dev: f64,
    pub tail_est: f64,
    pub seconds: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn code_of(e: &BoltzError) -> BgStatus {
    match e {
        BoltzError::Dimension { .. } => BgStatus::Dimension,
        BoltzError::NotPositiveDefinite(_) => BgStatus::NotPositiveDefinite,
        BoltzError::InvalidArgument(_) => BgStatus::InvalidArgument,
        BoltzError::Truncation { .. } | BoltzError::Window { .. } => BgStatus::Truncation,
        BoltzError::Quadrature(_) | BoltzError::LinearAlgebra(_) | BoltzError::Internal(_) => BgStatus::Numerical,
        BoltzError::Config(_) => BgStatus::Config,
        BoltzError::Excluded(_) => BgStatus::Excluded,
        BoltzError::Io(_) => BgStatus::Io,
        BoltzError::AtCoordinates { source, .. } => code_of(source),
    }
}

struct Fail(BgStatus, String);

impl From<BoltzError> for Fail {
    fn from(e: BoltzError) -> Self {
        Fail(code_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(BgStatus::NullPointer, format!("{what} is null"))
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BgStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("panic inside boltzgrad");
            BgStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(BgStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread; empty after success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn bg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a TOML configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bg_config_from_toml(text: *const c_char, out: *mut *mut BgConfig) -> BgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = ExperimentConfig::from_toml(str_arg(text, "text")?)?;
        *out = boxed(BgConfig(cfg));
        Ok(())
    })
}

/// Load a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bg_config_load(path: *const c_char, out: *mut *mut BgConfig) -> BgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let cfg = ExperimentConfig::load(Path::new(str_arg(path, "path")?))?;
        *out = boxed(BgConfig(cfg));
        Ok(())
    })
}

/// Override the worker count; zero means the global pool.
///
/// # Safety
/// `cfg` must come from `bg_config_*` and not be freed.
#[no_mangle]
pub unsafe extern "C" fn bg_config_set_threads(cfg: *mut BgConfig, threads: usize) -> BgStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        cfg.0.threads = (threads > 0).then_some(threads);
        Ok(())
    })
}

/// Turn wall-time recording on or off (off gives reproducible bytes).
///
/// # Safety
/// `cfg` must come from `bg_config_*` and not be freed.
#[no_mangle]
pub unsafe extern "C" fn bg_config_set_timings(cfg: *mut BgConfig, on: bool) -> BgStatus {
    guard(|| {
        out_arg(cfg, "cfg")?.0.timings = on;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from `bg_config_*` or be null.
#[no_mangle]
pub unsafe extern "C" fn bg_config_free(cfg: *mut BgConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run the configured experiment.
///
/// # Safety
/// `cfg` must be a live config and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bg_run_experiment(cfg: *const BgConfig, out: *mut *mut BgRecord) -> BgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let rec = run_experiment(&ref_arg(cfg, "cfg")?.0)?;
        *out = boxed(BgRecord(rec));
        Ok(())
    })
}

/// # Safety
/// `rec` must be a live record.
#[no_mangle]
pub unsafe extern "C" fn bg_record_verdict(rec: *const BgRecord, out: *mut BgVerdict) -> BgStatus {
    guard(|| {
        let rec = ref_arg(rec, "rec")?;
        *out_arg(out, "out")? = match rec.0.status {
            Status::Pass => BgVerdict::Pass,
            Status::Fail => BgVerdict::Fail,
            Status::Excluded(_) => BgVerdict::Excluded,
        };
        Ok(())
    })
}

/// # Safety
/// `rec` must be a live record.
#[no_mangle]
pub unsafe extern "C" fn bg_record_row_count(rec: *const BgRecord, out: *mut usize) -> BgStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(rec, "rec")?.0.rows.len();
        Ok(())
    })
}

/// Copy row `index` into `out`.
///
/// # Safety
/// `rec` must be a live record and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bg_record_row(rec: *const BgRecord, index: usize, out: *mut BgRow) -> BgStatus {
    guard(|| {
        let rec = ref_arg(rec, "rec")?;
        let out = out_arg(out, "out")?;
        let row = rec.0.rows.get(index).ok_or_else(|| {
            Fail(BgStatus::OutOfRange, format!("row {index} of {}", rec.0.rows.len()))
        })?;
        *out = BgRow {
            d: row.d,
            r: row.r,
            lambda: row.lambda.unwrap_or(f64::NAN),
            value_re: row.value_re,
            value_im: row.value_im,
            limit_re: row.limit_re,
            limit_im: row.limit_im,
            abs_dev: row.abs_dev,
            rel_dev: row.rel_dev,
            tail_est: row.tail_est,
            seconds: row.seconds,
        };
        Ok(())
    })
}

unsafe fn emit_string(s: String, out: *mut *mut c_char) -> Result<(), Fail> {
    let out = out_arg(out, "out")?;
    *out = CString::new(s)
        .map_err(|_| Fail(BgStatus::Numerical, "output contains NUL".into()))?
        .into_raw();
    Ok(())
}

/// CSV text of the record; release with `bg_string_free`.
///
/// # Safety
/// `rec` must be a live record and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bg_record_csv(rec: *const BgRecord, out: *mut *mut c_char) -> BgStatus {
    guard(|| emit_string(to_csv(&ref_arg(rec, "rec")?.0), out))
}

/// JSON-lines text of the record; release with `bg_string_free`.
///
/// # Safety
/// `rec` must be a live record and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bg_record_json_lines(rec: *const BgRecord, out: *mut *mut c_char) -> BgStatus {
    guard(|| emit_string(to_json_lines(&ref_arg(rec, "rec")?.0)?, out))
}

/// # Safety
/// `rec` must come from `bg_run_experiment` or be null.
#[no_mangle]
pub unsafe extern "C" fn bg_record_free(rec: *mut BgRecord) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// # Safety
/// `s` must come from a `bg_record_*` text call or be null.
#[no_mangle]
pub unsafe extern "C" fn bg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Gaussian in `n` variables. `m` holds `n·n` complex entries (row-major,
/// interleaved re, im), `w` holds `n` interleaved complex entries.
///
/// # Safety
/// `m` must point to `2n²` doubles, `w` to `2n`, and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn bg_gaussian_new(
    n: usize,
    c_re: f64,
    c_im: f64,
    m: *const f64,
    w: *const f64,
    out: *mut *mut BgGaussian,
) -> BgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if n == 0 {
            return Err(Fail(BgStatus::InvalidArgument, "n must be positive".into()));
        }
        let m = slice_arg(m, 2 * n * n, "m")?;
        let w = slice_arg(w, 2 * n, "w")?;
        let mat = CMat::from_fn(n, n, |i, j| Complex64::new(m[2 * (i * n + j)], m[2 * (i * n + j) + 1]));
        let lin = (0..n).map(|i| Complex64::new(w[2 * i], w[2 * i + 1])).collect();
        let g = ComplexGaussian::new(Complex64::new(c_re, c_im), mat, lin)?;
        *out = boxed(BgGaussian(g));
        Ok(())
    })
}

/// `exp(−π‖z‖²)` in `n` variables, shifted to `center` when non-null.
///
/// # Safety
/// `center` must be null or point to `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bg_gaussian_standard(n: usize, center: *const f64, out: *mut *mut BgGaussian) -> BgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        if n == 0 {
            return Err(Fail(BgStatus::InvalidArgument, "n must be positive".into()));
        }
        let mut g = ComplexGaussian::standard(n);
        if !center.is_null() {
            g = g.shifted(slice_arg(center, n, "center")?);
        }
        *out = boxed(BgGaussian(g));
        Ok(())
    })
}

/// # Safety
/// `g` must be a live Gaussian and `z` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bg_gaussian_eval(
    g: *const BgGaussian,
    z: *const f64,
    len: usize,
    re: *mut f64,
    im: *mut f64,
) -> BgStatus {
    guard(|| {
        let v = ref_arg(g, "g")?.0.eval(slice_arg(z, len, "z")?)?;
        *out_arg(re, "re")? = v.re;
        *out_arg(im, "im")? = v.im;
        Ok(())
    })
}

/// `∫ g` over the whole space.
///
/// # Safety
/// `g` must be a live Gaussian.
#[no_mangle]
pub unsafe extern "C" fn bg_gaussian_integral(g: *const BgGaussian, re: *mut f64, im: *mut f64) -> BgStatus {
    guard(|| {
        let v = ref_arg(g, "g")?.0.integral();
        *out_arg(re, "re")? = v.re;
        *out_arg(im, "im")? = v.im;
        Ok(())
    })
}

/// `∫ a · conj b` over phase space.
///
/// # Safety
/// `a`, `b` must be live Gaussians.
#[no_mangle]
pub unsafe extern "C" fn bg_hs_pairing(a: *const BgGaussian, b: *const BgGaussian, re: *mut f64, im: *mut f64) -> BgStatus {
    guard(|| {
        let v = hs_pairing(&ref_arg(a, "a")?.0, &ref_arg(b, "b")?.0)?;
        *out_arg(re, "re")? = v.re;
        *out_arg(im, "im")? = v.im;
        Ok(())
    })
}

/// `Θ_f(τ, φ, ξ)` for a Gaussian `f` in `2d` variables; `xi` holds `2d`
/// doubles.
///
/// # Safety
/// `f` must be a live Gaussian and `xi` point to `xi_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bg_theta_eval(
    f: *const BgGaussian,
    tau_re: f64,
    tau_im: f64,
    phi: f64,
    xi: *const f64,
    xi_len: usize,
    re: *mut f64,
    im: *mut f64,
) -> BgStatus {
    guard(|| {
        let f = &ref_arg(f, "f")?.0;
        let g = GroupElement::new(Complex64::new(tau_re, tau_im), phi, slice_arg(xi, xi_len, "xi")?.to_vec())?;
        let v = theta_eval(f, &g, THETA_EPS)?.value;
        *out_arg(re, "re")? = v.re;
        *out_arg(im, "im")? = v.im;
        Ok(())
    })
}

/// # Safety
/// `g` must come from `bg_gaussian_*` or be null.
#[no_mangle]
pub unsafe extern "C" fn bg_gaussian_free(g: *mut BgGaussian) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}
