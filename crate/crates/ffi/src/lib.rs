//! C interface to the parallel-in-time toolkit.
//!
//! Conventions:
//! - Handles (`PintConfigHandle`, `PintReportHandle`) are opaque; each
//!   constructor has a matching `_free`, and passing null to a `_free` is a
//!   no-op.
//! - Fallible calls return a [`PintStatusCode`]; on failure a thread-local
//!   message with details is available via [`pintkit_last_error_message`].
//! - Strings returned through `char **` out-parameters are NUL-terminated
//!   UTF-8 owned by the library; release them with [`pintkit_string_free`].
//!   The pointer returned by [`pintkit_version`] is static and must not be
//!   freed.
//! - No call unwinds across the boundary; internal panics surface as
//!   `PINT_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pintkit::config::parse_config;
use pintkit::engine::{run_pint, PintConfig, RunReport, RunStatus};

/// Result of a library call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PintStatusCode {
    /// The call succeeded.
    PintStatusOk = 0,
    /// A required pointer argument was null.
    PintStatusNullArgument = 1,
    /// A string argument was not valid UTF-8.
    PintStatusInvalidUtf8 = 2,
    /// The configuration failed to parse or validate.
    PintStatusConfig = 3,
    /// The run could not be started.
    PintStatusRunFailed = 4,
    /// An internal invariant failed; the library state is still consistent.
    PintStatusPanic = 5,
}

/// Terminal condition of a completed run.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PintRunOutcome {
    /// The run converged (possibly at the iteration ceiling).
    PintRunConverged = 0,
    /// The wall-clock budget expired first.
    PintRunBudgetExhausted = 1,
    /// A solver or correction failure stopped the run early.
    PintRunAborted = 2,
}

/// Opaque parsed-and-validated run configuration.
pub struct PintConfigHandle(PintConfig);

/// Opaque run report.
pub struct PintReportHandle(RunReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let text = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn guard<F: FnOnce() -> PintStatusCode>(body: F) -> PintStatusCode {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(payload) => {
            let detail = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(format!("internal error: {detail}"));
            PintStatusCode::PintStatusPanic
        }
    }
}

/// Library version as a static NUL-terminated string; do not free.
#[no_mangle]
pub extern "C" fn pintkit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses a TOML run configuration. On success writes a new handle to `out`;
/// the caller owns it and must release it with `pintkit_config_free`.
///
/// # Safety
/// `text` must point to a NUL-terminated string and `out` must be a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn pintkit_config_from_toml(
    text: *const c_char,
    out: *mut *mut PintConfigHandle,
) -> PintStatusCode {
    guard(|| {
        clear_last_error();
        if text.is_null() || out.is_null() {
            set_last_error("null argument".into());
            return PintStatusCode::PintStatusNullArgument;
        }
        let raw = unsafe { CStr::from_ptr(text) };
        let Ok(text) = raw.to_str() else {
            set_last_error("config text is not valid UTF-8".into());
            return PintStatusCode::PintStatusInvalidUtf8;
        };
        match parse_config(text) {
            Ok(config) => {
                unsafe { *out = Box::into_raw(Box::new(PintConfigHandle(config))) };
                PintStatusCode::PintStatusOk
            }
            Err(message) => {
                set_last_error(message);
                PintStatusCode::PintStatusConfig
            }
        }
    })
}

/// Releases a configuration handle. Null is ignored.
///
/// # Safety
/// `config` must be a handle returned by this library, released once.
#[no_mangle]
pub unsafe extern "C" fn pintkit_config_free(config: *mut PintConfigHandle) {
    if !config.is_null() {
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Executes a run. On success writes a new report handle to `out`; the
/// caller owns it and must release it with `pintkit_report_free`. Runtime
/// failures (solver blow-up) still return `PINT_STATUS_OK` with an aborted
/// report; inspect `pintkit_report_outcome`.
///
/// # Safety
/// `config` must be a valid configuration handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pintkit_run(
    config: *const PintConfigHandle,
    out: *mut *mut PintReportHandle,
) -> PintStatusCode {
    guard(|| {
        clear_last_error();
        if config.is_null() || out.is_null() {
            set_last_error("null argument".into());
            return PintStatusCode::PintStatusNullArgument;
        }
        let config = unsafe { &(*config).0 };
        match run_pint(config) {
            Ok(report) => {
                unsafe { *out = Box::into_raw(Box::new(PintReportHandle(report))) };
                PintStatusCode::PintStatusOk
            }
            Err(err) => {
                set_last_error(err.to_string());
                PintStatusCode::PintStatusRunFailed
            }
        }
    })
}

/// Releases a report handle. Null is ignored.
///
/// # Safety
/// `report` must be a handle returned by this library, released once.
#[no_mangle]
pub unsafe extern "C" fn pintkit_report_free(report: *mut PintReportHandle) {
    if !report.is_null() {
        drop(unsafe { Box::from_raw(report) });
    }
}

/// Terminal condition of the run. A null handle reads as aborted.
///
/// # Safety
/// `report` must be a valid report handle or null.
#[no_mangle]
pub unsafe extern "C" fn pintkit_report_outcome(report: *const PintReportHandle) -> PintRunOutcome {
    if report.is_null() {
        return PintRunOutcome::PintRunAborted;
    }
    match unsafe { &(*report).0 }.status {
        RunStatus::Converged => PintRunOutcome::PintRunConverged,
        RunStatus::BudgetExhausted => PintRunOutcome::PintRunBudgetExhausted,
        RunStatus::Aborted { .. } => PintRunOutcome::PintRunAborted,
    }
}

/// Number of completed outer iterations; 0 for a null handle.
///
/// # Safety
/// `report` must be a valid report handle or null.
#[no_mangle]
pub unsafe extern "C" fn pintkit_report_iterations(report: *const PintReportHandle) -> u32 {
    if report.is_null() {
        return 0;
    }
    unsafe { &(*report).0 }.iterations as u32
}

/// Serializes the full report to JSON. The caller owns the returned string
/// and must release it with `pintkit_string_free`.
///
/// # Safety
/// `report` must be a valid report handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pintkit_report_to_json(
    report: *const PintReportHandle,
    out: *mut *mut c_char,
) -> PintStatusCode {
    guard(|| {
        clear_last_error();
        if report.is_null() || out.is_null() {
            set_last_error("null argument".into());
            return PintStatusCode::PintStatusNullArgument;
        }
        let report = unsafe { &(*report).0 };
        let json = serde_json::to_string_pretty(report).expect("report serializes");
        let text = CString::new(json).expect("JSON contains no NUL");
        unsafe { *out = text.into_raw() };
        PintStatusCode::PintStatusOk
    })
}

/// Copies the most recent error message on this thread, or null if the last
/// call succeeded. The caller owns the returned string and must release it
/// with `pintkit_string_free`.
#[no_mangle]
pub extern "C" fn pintkit_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|text| text.clone().into_raw())
            .unwrap_or(ptr::null_mut())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `text` must be a string returned by this library, released once.
#[no_mangle]
pub unsafe extern "C" fn pintkit_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(unsafe { CString::from_raw(text) });
    }
}
