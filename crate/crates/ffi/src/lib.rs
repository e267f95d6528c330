//! C interface to the bcrisk model.
//!
//! Handles are opaque pointers created by `*_new`/`*_from_*` functions and released
//! with the matching `*_free`. Every fallible call returns a [`BcriskStatus`]; on
//! failure the message is available from [`bcrisk_last_error`] on the same thread.
//! Strings returned through `char **` out-parameters are owned by the caller and must
//! be released with [`bcrisk_string_free`].
//!
//! A model handle may be shared between threads for concurrent read-only calls.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use bcrisk::calib::{calibrate, read_cohort, read_curves, CalibrationOptions};
use bcrisk::hazard::{cumulative_incidence, PiecewiseHazard};
use bcrisk::risk::{assessment_json, AssessRequest, RiskAssessment, RiskError, RiskModel};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcriskStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Malformed or out-of-range input.
    InvalidInput = 3,
    /// A numerical procedure failed.
    Numeric = 4,
    Io = 5,
    /// A bug inside the library; the message says where.
    Panic = 6,
}

/// Opaque risk model.
pub struct BcriskModel {
    inner: RiskModel,
}

/// Opaque assessment result.
pub struct BcriskAssessment {
    inner: RiskAssessment,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(BcriskStatus, String);

impl From<RiskError> for Failure {
    fn from(e: RiskError) -> Self {
        let status = match &e {
            RiskError::Io { .. } => BcriskStatus::Io,
            e if e.is_numeric() => BcriskStatus::Numeric,
            _ => BcriskStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BcriskStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            BcriskStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal error: {msg}"));
            BcriskStatus::Panic
        }
    }
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(BcriskStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(BcriskStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` is null or a NUL-terminated string valid for the call.
unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(BcriskStatus::NullPointer, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(BcriskStatus::Panic, "string contains NUL".into()))
}

fn parse<T: serde::de::DeserializeOwned>(json: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(json).map_err(|e| Failure(BcriskStatus::InvalidInput, format!("{what}: {e}")))
}

/// Message for the last failed call on this thread; empty after a success. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn bcrisk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn bcrisk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or came from this library and has not been freed.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Model with the built-in parameter tables.
///
/// # Safety
/// `out` is a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_model_new_default(out: *mut *mut BcriskModel) -> BcriskStatus {
    guard(|| {
        check_out(out)?;
        *out = Box::into_raw(Box::new(BcriskModel { inner: RiskModel::default() }));
        Ok(())
    })
}

/// Model from a parameter directory; files that are absent use the built-ins.
///
/// # Safety
/// `dir` is a NUL-terminated path; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_model_from_dir(dir: *const c_char, out: *mut *mut BcriskModel) -> BcriskStatus {
    guard(|| {
        check_out(out)?;
        let dir = text(dir, "dir")?;
        let model = RiskModel::from_dir(Path::new(dir))?;
        *out = Box::into_raw(Box::new(BcriskModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` is null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_model_free(model: *mut BcriskModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Combined parameter version string; free with [`bcrisk_string_free`].
///
/// # Safety
/// `model` is a live handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_model_parameter_version(model: *const BcriskModel, out: *mut *mut c_char) -> BcriskStatus {
    guard(|| {
        check_out(out)?;
        let m = model.as_ref().ok_or(Failure(BcriskStatus::NullPointer, "model is null".into()))?;
        *out = owned_string(m.inner.parameter_version().to_string())?;
        Ok(())
    })
}

/// Full assessment for a JSON request `{"age", "horizons", "profile", "pedigree"}`.
///
/// # Safety
/// `model` is a live handle, `request_json` a NUL-terminated string, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_assess(
    model: *const BcriskModel,
    request_json: *const c_char,
    out: *mut *mut BcriskAssessment,
) -> BcriskStatus {
    guard(|| {
        check_out(out)?;
        let m = model.as_ref().ok_or(Failure(BcriskStatus::NullPointer, "model is null".into()))?;
        let req: AssessRequest = parse(text(request_json, "request_json")?, "request")?;
        let a = m.inner.assess_request(&req)?;
        let json = CString::new(assessment_json(&a)).map_err(|_| Failure(BcriskStatus::Panic, "NUL in JSON".into()))?;
        *out = Box::into_raw(Box::new(BcriskAssessment { inner: a, json }));
        Ok(())
    })
}

/// # Safety
/// `a` is null or a handle from this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_assessment_free(a: *mut BcriskAssessment) {
    if !a.is_null() {
        drop(Box::from_raw(a));
    }
}

/// Ten-year absolute risk, or NaN for a null handle.
///
/// # Safety
/// `a` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_assessment_ten_year_risk(a: *const BcriskAssessment) -> f64 {
    a.as_ref().map_or(f64::NAN, |a| a.inner.ten_year_risk)
}

/// Risk to age 85, or NaN for a null handle.
///
/// # Safety
/// `a` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_assessment_lifetime_risk(a: *const BcriskAssessment) -> f64 {
    a.as_ref().map_or(f64::NAN, |a| a.inner.lifetime_risk)
}

/// Applied relative hazard, or NaN for a null handle.
///
/// # Safety
/// `a` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_assessment_relative_hazard(a: *const BcriskAssessment) -> f64 {
    a.as_ref().map_or(f64::NAN, |a| a.inner.relative_hazard.applied)
}

/// Ten-year risk category: 0 `<2%`, 1 `2-3%`, 2 `3-5%`, 3 `5-8%`, 4 `>=8%`; -1 for null.
///
/// # Safety
/// `a` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_assessment_category(a: *const BcriskAssessment) -> i32 {
    a.as_ref().map_or(-1, |a| a.inner.risk_category as i32)
}

/// The assessment as JSON, borrowed from the handle and valid until it is freed.
///
/// # Safety
/// `a` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_assessment_json(a: *const BcriskAssessment) -> *const c_char {
    a.as_ref().map_or(ptr::null(), |a| a.json.as_ptr())
}

/// Absolute risk between ages `t0` and `t` for a risk-factor JSON (null: all unknown)
/// and no family information.
///
/// # Safety
/// `model` is a live handle, `profile_json` null or NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_absolute_risk(
    model: *const BcriskModel,
    profile_json: *const c_char,
    t0: f64,
    t: f64,
    out: *mut f64,
) -> BcriskStatus {
    guard(|| {
        check_out(out)?;
        let m = model.as_ref().ok_or(Failure(BcriskStatus::NullPointer, "model is null".into()))?;
        let profile = match optional_text(profile_json, "profile_json")? {
            Some(s) => parse(s, "profile")?,
            None => Default::default(),
        };
        *out = m.inner.absolute_risk(None, &profile, t0, t)?;
        Ok(())
    })
}

/// Cumulative incidence over `years` under constant cause-specific hazards.
///
/// # Safety
/// `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_constant_hazard_risk(h1: f64, h2: f64, years: f64, out: *mut f64) -> BcriskStatus {
    guard(|| {
        check_out(out)?;
        let bad = || Failure(BcriskStatus::InvalidInput, format!("need h1, h2 >= 0 and years >= 0, got {h1}, {h2}, {years}"));
        if !(years >= 0.0 && years.is_finite()) {
            return Err(bad());
        }
        let a = PiecewiseHazard::constant(0.0, years.max(f64::MIN_POSITIVE), h1).map_err(|_| bad())?;
        let b = PiecewiseHazard::constant(0.0, years.max(f64::MIN_POSITIVE), h2).map_err(|_| bad())?;
        *out = cumulative_incidence(&a, &b, 0.0, years);
        Ok(())
    })
}

/// Calibration report JSON for a cohort CSV with its curves CSV. `options_json` may be
/// null for defaults. Free the result with [`bcrisk_string_free`].
///
/// # Safety
/// String arguments are NUL-terminated (`options_json` may be null); `out` is valid.
#[no_mangle]
pub unsafe extern "C" fn bcrisk_calibrate_csv(
    cohort_csv: *const c_char,
    curves_csv: *const c_char,
    options_json: *const c_char,
    out: *mut *mut c_char,
) -> BcriskStatus {
    guard(|| {
        check_out(out)?;
        let cohort = text(cohort_csv, "cohort_csv")?;
        let curves = read_curves(text(curves_csv, "curves_csv")?.as_bytes())
            .map_err(|e| Failure(BcriskStatus::InvalidInput, format!("curves: {e}")))?;
        let options: CalibrationOptions = match optional_text(options_json, "options_json")? {
            Some(s) => parse(s, "options")?,
            None => CalibrationOptions::default(),
        };
        let calib_failure = |e: bcrisk::calib::CalibError| {
            let status = if e.is_numeric() { BcriskStatus::Numeric } else { BcriskStatus::InvalidInput };
            Failure(status, e.to_string())
        };
        let records = read_cohort(cohort.as_bytes(), Some(&curves), None).map_err(calib_failure)?;
        let report = calibrate(&records, &options).map_err(calib_failure)?;
        *out = owned_string(serde_json::to_string_pretty(&report).expect("serializable"))?;
        Ok(())
    })
}
