//! C ABI over `ipslab`: configurations and reports behind opaque handles,
//! status codes for every call, and JSON for structured results.
//!
//! Strings returned to the caller are owned by it and released with
//! [`ips_string_free`]. The message of the last failing call on the current
//! thread is available from [`ips_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use clap::ValueEnum;
use ipslab::cli::execute;
use ipslab::config::{ExperimentConfig, ExperimentKind};
use ipslab::error::Error;
use ipslab::report::ExperimentReport;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IpsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    Domain = 4,
    Unsupported = 5,
    Contract = 6,
    Refused = 7,
    Io = 8,
    Panic = 9,
}

/// Parsed experiment configuration.
pub struct IpsConfig {
    inner: ExperimentConfig,
}

/// Finished experiment report.
pub struct IpsReport {
    inner: ExperimentReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> IpsStatus {
    match e {
        Error::Domain(_) => IpsStatus::Domain,
        Error::Unsupported(_) => IpsStatus::Unsupported,
        Error::Contract(_) => IpsStatus::Contract,
        Error::Refused(_) => IpsStatus::Refused,
        Error::Config(_) => IpsStatus::InvalidConfig,
        Error::Io(_) => IpsStatus::Io,
    }
}

fn fail(status: IpsStatus, msg: &str) -> IpsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> IpsStatus) -> IpsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(IpsStatus::Panic, "internal panic"),
    }
}

/// # Safety
/// `s` must be null or a NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, IpsStatus> {
    if s.is_null() {
        return Err(fail(IpsStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| fail(IpsStatus::InvalidUtf8, "string argument is not UTF-8"))
}

fn give_string(s: String, out: *mut *mut c_char) -> IpsStatus {
    match CString::new(s) {
        Ok(c) => {
            // SAFETY: callers check `out` for null before calling.
            unsafe { *out = c.into_raw() };
            IpsStatus::Ok
        }
        Err(_) => fail(IpsStatus::Contract, "output contains a NUL byte"),
    }
}

fn kind(name: &str) -> Result<ExperimentKind, IpsStatus> {
    ExperimentKind::from_str(name, false)
        .map_err(|_| fail(IpsStatus::InvalidConfig, &format!("unknown experiment {name:?}")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ips_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ips_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a TOML configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ips_config_parse(toml: *const c_char, out: *mut *mut IpsConfig) -> IpsStatus {
    guard(|| {
        if out.is_null() {
            return fail(IpsStatus::NullPointer, "null output pointer");
        }
        let text = match read_str(toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ExperimentConfig::parse(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(IpsConfig { inner }));
                IpsStatus::Ok
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Releases a configuration; null is ignored.
///
/// # Safety
/// `config` must be null or come from [`ips_config_parse`], and not be
/// freed twice.
#[no_mangle]
pub unsafe extern "C" fn ips_config_free(config: *mut IpsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Overrides the master seed and replica count; a zero count keeps the
/// configured one.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ips_config_override(config: *mut IpsConfig, seed: u64, reps: u64) -> IpsStatus {
    guard(|| {
        let Some(c) = config.as_mut() else {
            return fail(IpsStatus::NullPointer, "null configuration");
        };
        c.inner.seed = seed;
        if reps > 0 {
            c.inner.reps = reps;
        }
        IpsStatus::Ok
    })
}

/// Writes the violations of `config` for `experiment` (null: subcommand
/// independent rules only) as a JSON array of strings into `out`.
///
/// # Safety
/// `config` must be a live handle, `experiment` null or a NUL-terminated
/// string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ips_config_violations(
    config: *const IpsConfig,
    experiment: *const c_char,
    out: *mut *mut c_char,
) -> IpsStatus {
    guard(|| {
        let Some(c) = config.as_ref() else {
            return fail(IpsStatus::NullPointer, "null configuration");
        };
        if out.is_null() {
            return fail(IpsStatus::NullPointer, "null output pointer");
        }
        let k = if experiment.is_null() {
            None
        } else {
            match read_str(experiment).and_then(kind) {
                Ok(k) => Some(k),
                Err(s) => return s,
            }
        };
        let v = c.inner.violations(k);
        give_string(serde_json::to_string(&v).expect("strings serialise"), out)
    })
}

/// Runs `experiment` ("duality", "mu", ...) and stores the report in `out`.
///
/// # Safety
/// `config` must be a live handle, `experiment` a NUL-terminated string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ips_run(
    config: *const IpsConfig,
    experiment: *const c_char,
    out: *mut *mut IpsReport,
) -> IpsStatus {
    guard(|| {
        let Some(c) = config.as_ref() else {
            return fail(IpsStatus::NullPointer, "null configuration");
        };
        if out.is_null() {
            return fail(IpsStatus::NullPointer, "null output pointer");
        }
        let k = match read_str(experiment).and_then(kind) {
            Ok(k) => k,
            Err(s) => return s,
        };
        match execute(k, &c.inner) {
            Ok((inner, _)) => {
                *out = Box::into_raw(Box::new(IpsReport { inner }));
                IpsStatus::Ok
            }
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// 1 when the report's acceptance check passed, 0 when it failed, -1 when
/// the experiment has none or `report` is null.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ips_report_passed(report: *const IpsReport) -> i32 {
    match report.as_ref().and_then(|r| r.inner.passed) {
        Some(true) => 1,
        Some(false) => 0,
        None => -1,
    }
}

/// Writes the report as JSON into `out`; `canonical` zeroes the wall time.
///
/// # Safety
/// `report` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ips_report_json(
    report: *const IpsReport,
    canonical: bool,
    out: *mut *mut c_char,
) -> IpsStatus {
    guard(|| {
        let Some(r) = report.as_ref() else {
            return fail(IpsStatus::NullPointer, "null report");
        };
        if out.is_null() {
            return fail(IpsStatus::NullPointer, "null output pointer");
        }
        let json = if canonical { r.inner.canonical_json() } else { r.inner.to_json() };
        match json {
            Ok(j) => give_string(j, out),
            Err(e) => fail(status_of(&e), &e.to_string()),
        }
    })
}

/// Releases a report; null is ignored.
///
/// # Safety
/// `report` must be null or come from [`ips_run`], and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ips_report_free(report: *mut IpsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must be null or a string returned by this library, not freed twice.
#[no_mangle]
pub unsafe extern "C" fn ips_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
