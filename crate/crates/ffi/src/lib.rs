//! C ABI for the qsmooth library.
//!
//! Every fallible call returns a [`QsStatus`]. On failure the message is
//! kept per thread and read with [`qs_last_error_message`]. Handles are
//! opaque and owned by the caller, who releases them with the matching
//! `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qsmooth::qubit::{BlochVector, DensityMatrix, Effect, ModelParams};
use qsmooth::scenarios::{pre_solve, run_scenario, Preset, ScenarioConfig, ScenarioOutput};
use qsmooth::smoother::swv_state;
use qsmooth::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsStatus {
    QsOk = 0,
    QsErrNullPointer = 1,
    QsErrConfig = 2,
    QsErrNumerical = 3,
    QsErrIo = 4,
    QsErrOutOfRange = 5,
    QsErrPanic = 6,
}

/// Scenario configuration.
pub struct QsConfig {
    inner: ScenarioConfig,
}

/// Datasets produced by a scenario run.
pub struct QsResult {
    output: ScenarioOutput,
    names: Vec<CString>,
    columns: Vec<Vec<CString>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut s = msg.into();
    s.retain(|c| c != '\0');
    let c = CString::new(s).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> QsStatus {
    match e.exit_code() {
        2 => QsStatus::QsErrConfig,
        3 => QsStatus::QsErrNumerical,
        _ => QsStatus::QsErrIo,
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), (QsStatus, String)>) -> QsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QsStatus::QsOk,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QsStatus::QsErrPanic
        }
    }
}

fn lib_err(e: Error) -> (QsStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (QsStatus, String) {
    (QsStatus::QsErrNullPointer, format!("{what} is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (QsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (QsStatus::QsErrConfig, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn qs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn qs_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default configuration for the named preset.
///
/// # Safety
/// `preset` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qs_config_new(preset: *const c_char, out: *mut *mut QsConfig) -> QsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let preset: Preset = str_arg(preset, "preset")?.parse().map_err(lib_err)?;
        *out = Box::into_raw(Box::new(QsConfig {
            inner: ScenarioConfig::new(preset),
        }));
        Ok(())
    })
}

/// Configuration from `key = value` text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qs_config_parse(text: *const c_char, out: *mut *mut QsConfig) -> QsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = ScenarioConfig::parse(str_arg(text, "text")?).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(QsConfig { inner }));
        Ok(())
    })
}

/// Sets one key.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be
/// NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn qs_config_set(
    cfg: *mut QsConfig,
    key: *const c_char,
    value: *const c_char,
) -> QsStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        let key = str_arg(key, "key")?;
        cfg.inner
            .set(key, str_arg(value, "value")?)
            .map_err(|m| (QsStatus::QsErrConfig, format!("{key}: {m}")))
    })
}

/// # Safety
/// `cfg` must be NULL or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qs_config_free(cfg: *mut QsConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the configured preset.
///
/// # Safety
/// `cfg` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qs_run(cfg: *const QsConfig, out: *mut *mut QsResult) -> QsStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let output = run_scenario(&cfg.inner).map_err(lib_err)?;
        let cstr = |s: &str| CString::new(s).expect("names have no NUL");
        let names = output.datasets.iter().map(|d| cstr(&d.name)).collect();
        let columns = output
            .datasets
            .iter()
            .map(|d| d.columns.iter().map(|c| cstr(c)).collect())
            .collect();
        *out = Box::into_raw(Box::new(QsResult {
            output,
            names,
            columns,
        }));
        Ok(())
    })
}

/// Number of datasets, or 0 for NULL.
///
/// # Safety
/// `res` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn qs_result_dataset_count(res: *const QsResult) -> usize {
    res.as_ref().map_or(0, |r| r.output.datasets.len())
}

/// Name of dataset `index`, or NULL if out of range. Owned by `res`.
///
/// # Safety
/// `res` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn qs_result_dataset_name(res: *const QsResult, index: usize) -> *const c_char {
    res.as_ref()
        .and_then(|r| r.names.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Row and column counts of dataset `index`.
///
/// # Safety
/// `res` must come from this library; `rows` and `cols` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qs_result_dataset_shape(
    res: *const QsResult,
    index: usize,
    rows: *mut usize,
    cols: *mut usize,
) -> QsStatus {
    guard(|| {
        let r = res.as_ref().ok_or_else(|| null("res"))?;
        if rows.is_null() || cols.is_null() {
            return Err(null("rows/cols"));
        }
        let d = r
            .output
            .datasets
            .get(index)
            .ok_or((QsStatus::QsErrOutOfRange, format!("no dataset {index}")))?;
        *rows = d.rows.len();
        *cols = d.columns.len();
        Ok(())
    })
}

/// Header of column `column` in dataset `index`, or NULL. Owned by `res`.
///
/// # Safety
/// `res` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn qs_result_column_name(
    res: *const QsResult,
    index: usize,
    column: usize,
) -> *const c_char {
    res.as_ref()
        .and_then(|r| r.columns.get(index))
        .and_then(|c| c.get(column))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Copies dataset `index` row-major into `buf`, which holds `len` doubles
/// and must fit `rows * cols`.
///
/// # Safety
/// `res` must come from this library and `buf` point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qs_result_copy_values(
    res: *const QsResult,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> QsStatus {
    guard(|| {
        let r = res.as_ref().ok_or_else(|| null("res"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let d = r
            .output
            .datasets
            .get(index)
            .ok_or((QsStatus::QsErrOutOfRange, format!("no dataset {index}")))?;
        let need = d.rows.len() * d.columns.len();
        if len < need {
            return Err((
                QsStatus::QsErrOutOfRange,
                format!("buffer holds {len} values, dataset has {need}"),
            ));
        }
        let out = std::slice::from_raw_parts_mut(buf, need);
        for (dst, v) in out.iter_mut().zip(d.rows.iter().flatten()) {
            *dst = *v;
        }
        Ok(())
    })
}

/// Writes all CSV (and auxiliary) files of `res` into directory `dir`.
///
/// # Safety
/// `res` must come from this library and `dir` be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn qs_result_write(res: *const QsResult, dir: *const c_char) -> QsStatus {
    guard(|| {
        let r = res.as_ref().ok_or_else(|| null("res"))?;
        let dir = str_arg(dir, "dir")?;
        r.output.write(Path::new(dir)).map(|_| ()).map_err(lib_err)
    })
}

/// # Safety
/// `res` must be NULL or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qs_result_free(res: *mut QsResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Normalized Jordan product of the state with Bloch vector `rho_bloch` and
/// the effect `effect_scale·½(1 + b·σ)`. Writes its Bloch vector and
/// smallest eigenvalue.
///
/// # Safety
/// The array arguments must hold 3 doubles; `min_eigenvalue` must be valid.
#[no_mangle]
pub unsafe extern "C" fn qs_swv_state(
    rho_bloch: *const f64,
    effect_scale: f64,
    effect_bloch: *const f64,
    out_bloch: *mut f64,
    min_eigenvalue: *mut f64,
) -> QsStatus {
    guard(|| {
        if rho_bloch.is_null() || effect_bloch.is_null() || out_bloch.is_null() || min_eigenvalue.is_null() {
            return Err(null("argument"));
        }
        let v = |p: *const f64| {
            let s = std::slice::from_raw_parts(p, 3);
            BlochVector::new(s[0], s[1], s[2])
        };
        let rho = DensityMatrix::from_bloch(v(rho_bloch)).map_err(lib_err)?;
        let e = Effect::from_bloch(1.0, v(effect_bloch))
            .and_then(|e| e.scaled(effect_scale))
            .map_err(lib_err)?;
        let s = swv_state(&rho, &e).map_err(lib_err)?;
        let b = s.bloch();
        std::slice::from_raw_parts_mut(out_bloch, 3).copy_from_slice(&[b.x, b.y, b.z]);
        *min_eigenvalue = s.min_eigenvalue;
        Ok(())
    })
}

/// Adaptive-scheme ensemble for rates `gamma`, `epsilon` with `δ → 0`:
/// angles, occupations and `(μ₋, μ₊)` per state.
///
/// # Safety
/// `angles` and `occupations` must hold 3 doubles and `wlo` 6.
#[no_mangle]
pub unsafe extern "C" fn qs_pre_solve(
    gamma: f64,
    epsilon: f64,
    angles: *mut f64,
    occupations: *mut f64,
    wlo: *mut f64,
) -> QsStatus {
    guard(|| {
        if angles.is_null() || occupations.is_null() || wlo.is_null() {
            return Err(null("output array"));
        }
        let params = ModelParams::new(0.0, gamma, epsilon)
            .map_err(lib_err)?
            .with_delta_zero_limit(true);
        let report = pre_solve(&params, 0, 0).map_err(lib_err)?;
        let a = std::slice::from_raw_parts_mut(angles, 3);
        let o = std::slice::from_raw_parts_mut(occupations, 3);
        let w = std::slice::from_raw_parts_mut(wlo, 6);
        for (i, s) in report.states.iter().enumerate() {
            a[i] = s.theta;
            o[i] = s.occupation;
            w[2 * i] = s.mu_minus;
            w[2 * i + 1] = s.mu_plus;
        }
        Ok(())
    })
}
