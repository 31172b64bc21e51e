//! C ABI over the simulator: run an experiment from a TOML string and read
//! the resulting metrics through an opaque report handle. The matching
//! header lives at `include/revsync.h` and is kept in sync with the
//! exported surface by the `header_lists_every_export` test.
//!
//! Conventions: functions returning [`RevsyncStatus`] report failure
//! through the code and leave out-parameters untouched; the most recent
//! failure message of the calling thread is available via
//! [`revsync_last_error`]. Handles are freed exactly once with
//! [`revsync_report_free`]. All functions are panic-safe.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use revsync::config::ExperimentConfig;
use revsync::estimators::{cr_lower_bound, crlb_offset, crlb_skew};
use revsync::protocol::{predict_error_conventional, predict_error_reverse};
use revsync::sim::{run_simulation, RunReport};

/// Status codes of the C interface.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RevsyncStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    RuntimeError = 4,
    InternalPanic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| {
        *e.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn guard<F: FnOnce() -> RevsyncStatus>(f: F) -> RevsyncStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            RevsyncStatus::InternalPanic
        }
    }
}

/// Opaque run-report handle.
pub struct RevsyncReport(RunReport);

const VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
    Ok(v) => v,
    Err(_) => panic!("version string contains a NUL"),
};

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn revsync_version() -> *const c_char {
    VERSION.as_ptr()
}

/// Message of the calling thread's most recent failure. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn revsync_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Run the single experiment described by a TOML document (the same format
/// the CLI consumes). `seed_override` replaces the configured seed when
/// non-negative. On success stores a fresh handle in `out_report`.
///
/// # Safety
/// `config_toml` must point to a NUL-terminated string and `out_report`
/// to writable storage for one pointer; both must stay valid for the call.
#[no_mangle]
pub unsafe extern "C" fn revsync_run_toml(
    config_toml: *const c_char,
    seed_override: i64,
    out_report: *mut *mut RevsyncReport,
) -> RevsyncStatus {
    guard(|| {
        if config_toml.is_null() || out_report.is_null() {
            set_error("null pointer argument");
            return RevsyncStatus::NullPointer;
        }
        let text = match unsafe { CStr::from_ptr(config_toml) }.to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("config is not valid UTF-8");
                return RevsyncStatus::InvalidUtf8;
            }
        };
        let config = match ExperimentConfig::parse(text) {
            Ok(c) => c,
            Err(e) => {
                set_error(&e.to_string());
                return RevsyncStatus::InvalidConfig;
            }
        };
        let seed = (seed_override >= 0).then_some(seed_override as u64);
        let run_cfg = match config.base_run(seed) {
            Ok(c) => c,
            Err(e) => {
                set_error(&e.to_string());
                return RevsyncStatus::InvalidConfig;
            }
        };
        match run_simulation(&run_cfg) {
            Ok(report) => {
                unsafe {
                    *out_report = Box::into_raw(Box::new(RevsyncReport(report)));
                }
                RevsyncStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                RevsyncStatus::RuntimeError
            }
        }
    })
}

/// Free a report handle. NULL is accepted and ignored.
///
/// # Safety
/// `report` must have come from this library and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn revsync_report_free(report: *mut RevsyncReport) {
    if !report.is_null() {
        drop(unsafe { Box::from_raw(report) });
    }
}

unsafe fn with_report<T>(report: *const RevsyncReport, default: T, f: impl FnOnce(&RunReport) -> T) -> T {
    if report.is_null() {
        return default;
    }
    f(unsafe { &(*report).0 })
}

/// Post-warmup skew-estimation MSE; NaN when the scheme estimates no skew
/// or the handle is NULL.
///
/// # Safety
/// `report` must be a live handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn revsync_report_skew_mse(report: *const RevsyncReport) -> f64 {
    unsafe { with_report(report, f64::NAN, |r| r.skew_mse.unwrap_or(f64::NAN)) }
}

/// Post-warmup measurement-time MSE; NaN when absent or NULL.
///
/// # Safety
/// `report` must be a live handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn revsync_report_meas_time_mse(report: *const RevsyncReport) -> f64 {
    unsafe { with_report(report, f64::NAN, |r| r.meas_time_mse.unwrap_or(f64::NAN)) }
}

/// Sensor-side transmission count over the whole run; 0 on NULL.
///
/// # Safety
/// `report` must be a live handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn revsync_report_n_tx(report: *const RevsyncReport) -> u64 {
    unsafe { with_report(report, 0, |r| r.n_tx) }
}

/// Sensor-side reception count over the whole run; 0 on NULL.
///
/// # Safety
/// `report` must be a live handle from this library or NULL.
#[no_mangle]
pub unsafe extern "C" fn revsync_report_n_rx(report: *const RevsyncReport) -> u64 {
    unsafe { with_report(report, 0, |r| r.n_rx) }
}

/// Cramer-Rao lower bound on the skew-ratio estimate over a departure
/// design, for white Gaussian delay noise of standard deviation `sigma`.
///
/// # Safety
/// `departures` must point to `len` doubles and `out` to one writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn revsync_crlb_skew(
    departures: *const f64,
    len: usize,
    sigma: f64,
    out: *mut f64,
) -> RevsyncStatus {
    unsafe { bound_over_design(departures, len, sigma, out, crlb_skew) }
}

/// Cramer-Rao lower bound on the offset estimate over a departure design.
///
/// # Safety
/// Same contract as [`revsync_crlb_skew`].
#[no_mangle]
pub unsafe extern "C" fn revsync_crlb_offset(
    departures: *const f64,
    len: usize,
    sigma: f64,
    out: *mut f64,
) -> RevsyncStatus {
    unsafe { bound_over_design(departures, len, sigma, out, crlb_offset) }
}

unsafe fn bound_over_design(
    departures: *const f64,
    len: usize,
    sigma: f64,
    out: *mut f64,
    eval: fn(&[f64], f64) -> Result<f64, revsync::estimators::EstimatorError>,
) -> RevsyncStatus {
    guard(|| {
        if departures.is_null() || out.is_null() {
            set_error("null pointer argument");
            return RevsyncStatus::NullPointer;
        }
        let design = unsafe { std::slice::from_raw_parts(departures, len) };
        match eval(design, sigma) {
            Ok(v) => {
                unsafe { *out = v };
                RevsyncStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                RevsyncStatus::InvalidConfig
            }
        }
    })
}

/// Lower bound attained by the cumulative-ratio estimator over an elapsed
/// departure span.
///
/// # Safety
/// `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn revsync_cr_lower_bound(
    departure_span: f64,
    sigma: f64,
    out: *mut f64,
) -> RevsyncStatus {
    guard(|| {
        if out.is_null() {
            set_error("null pointer argument");
            return RevsyncStatus::NullPointer;
        }
        match cr_lower_bound(departure_span, sigma) {
            Ok(v) => {
                unsafe { *out = v };
                RevsyncStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                RevsyncStatus::InvalidConfig
            }
        }
    })
}

/// Best-case measurement-time error of the conventional scheme; see the
/// library documentation for the model.
#[no_mangle]
pub extern "C" fn revsync_predict_error_conventional(
    elapsed_since_sync: f64,
    one_way_delay: f64,
    skew_or_error: f64,
    compensated: c_int,
) -> f64 {
    predict_error_conventional(
        elapsed_since_sync,
        one_way_delay,
        skew_or_error,
        compensated != 0,
    )
}

/// Best-case measurement-time error of the reverse scheme.
#[no_mangle]
pub extern "C" fn revsync_predict_error_reverse(
    elapsed_since_sync: f64,
    one_way_delay: f64,
    skew_error: f64,
) -> f64 {
    predict_error_reverse(elapsed_since_sync, one_way_delay, skew_error)
}

// Re-exported for the header-consistency test.
#[doc(hidden)]
pub const EXPORTED_SYMBOLS: &[&str] = &[
    "revsync_version",
    "revsync_last_error",
    "revsync_run_toml",
    "revsync_report_free",
    "revsync_report_skew_mse",
    "revsync_report_meas_time_mse",
    "revsync_report_n_tx",
    "revsync_report_n_rx",
    "revsync_crlb_skew",
    "revsync_crlb_offset",
    "revsync_cr_lower_bound",
    "revsync_predict_error_conventional",
    "revsync_predict_error_reverse",
];
