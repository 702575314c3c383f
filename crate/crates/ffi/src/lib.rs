//! C ABI over `kgflow`.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `*_free`. Strings returned through out-parameters are released
//! with [`kgf_string_free`]. Every fallible call returns a [`KgfStatus`];
//! on failure [`kgf_last_error`] describes the cause for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use kgflow::executor::{execute, load_bindings, ExecError, Mode, RunBindings};
use kgflow::kg::{json_to_yaml, parse_json_plan, parse_yaml_plan, KnowledgeGraph};
use kgflow::planner::extract_json;
use kgflow::registry::{builtin_registry, load_registry, ToolRegistry};
use kgflow::verifier::{render_report, report_to_json, verify, VerificationReport};
use serde_json::json;

/// Result of a fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    ParseError = 3,
    RegistryError = 4,
    VerifyFailed = 5,
    ExecError = 6,
    ExtractionFailed = 7,
    InvalidArgument = 8,
    Panic = 9,
}

/// Execution mode for [`kgf_execute`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KgfMode {
    Learn = 0,
    Think = 1,
}

/// A parsed plan.
pub struct KgfPlan(KnowledgeGraph);

/// A tool registry.
pub struct KgfRegistry(ToolRegistry);

/// A verification report.
pub struct KgfReport(VerificationReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

type Fallible = Result<(), (KgfStatus, String)>;

/// Runs `f`, recording its error and converting panics.
fn guard(f: impl FnOnce() -> Fallible) -> KgfStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KgfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            KgfStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, (KgfStatus, String)> {
    if p.is_null() {
        return Err((KgfStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| (KgfStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

fn null(name: &str) -> (KgfStatus, String) {
    (KgfStatus::NullArgument, format!("`{name}` is null"))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn put_string(out: *mut *mut c_char, s: String) {
    *out = CString::new(s.replace('\0', " ")).expect("nul bytes replaced").into_raw();
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn kgf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn kgf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn kgf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn parse_plan(src: *const c_char, out: *mut *mut KgfPlan, json: bool) -> KgfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let t = text(src, "text")?;
        let g = if json { parse_json_plan(t) } else { parse_yaml_plan(t) };
        let g = g.map_err(|e| (KgfStatus::ParseError, e.to_string()))?;
        put(out, KgfPlan(g));
        Ok(())
    })
}

/// Parses a YAML plan into `*out`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_plan_parse_yaml(text: *const c_char, out: *mut *mut KgfPlan) -> KgfStatus {
    parse_plan(text, out, false)
}

/// Parses a planner JSON plan into `*out`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_plan_parse_json(text: *const c_char, out: *mut *mut KgfPlan) -> KgfStatus {
    parse_plan(text, out, true)
}

/// Writes the plan as YAML into `*out`.
///
/// # Safety
/// `plan` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_plan_to_yaml(plan: *const KgfPlan, out: *mut *mut c_char) -> KgfStatus {
    guard(|| {
        let plan = plan.as_ref().ok_or_else(|| null("plan"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        put_string(out, json_to_yaml(&plan.0));
        Ok(())
    })
}

/// # Safety
/// `plan` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn kgf_plan_free(plan: *mut KgfPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// The built-in tool registry.
#[no_mangle]
pub extern "C" fn kgf_registry_builtin() -> *mut KgfRegistry {
    Box::into_raw(Box::new(KgfRegistry(builtin_registry())))
}

/// Loads a registry from dictionary JSON into `*out`.
///
/// # Safety
/// `dictionary` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_registry_load(dictionary: *const c_char, out: *mut *mut KgfRegistry) -> KgfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let r = load_registry(text(dictionary, "dictionary")?).map_err(|e| (KgfStatus::RegistryError, e.to_string()))?;
        put(out, KgfRegistry(r));
        Ok(())
    })
}

/// # Safety
/// `registry` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn kgf_registry_free(registry: *mut KgfRegistry) {
    if !registry.is_null() {
        drop(Box::from_raw(registry));
    }
}

/// Verifies `plan` against `registry`. Returns `Ok` whether or not the plan
/// passes; query the report.
///
/// # Safety
/// `plan` and `registry` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_verify(plan: *const KgfPlan, registry: *const KgfRegistry, out: *mut *mut KgfReport) -> KgfStatus {
    guard(|| {
        let plan = plan.as_ref().ok_or_else(|| null("plan"))?;
        let registry = registry.as_ref().ok_or_else(|| null("registry"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, KgfReport(verify(&plan.0, &registry.0)));
        Ok(())
    })
}

/// 1 when the report has no errors, 0 otherwise (also for null).
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgf_report_passed(report: *const KgfReport) -> i32 {
    report.as_ref().is_some_and(|r| r.0.passed) as i32
}

/// Number of error diagnostics, or -1 for null.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kgf_report_error_count(report: *const KgfReport) -> i64 {
    report.as_ref().map_or(-1, |r| r.0.error_count() as i64)
}

unsafe fn report_string(report: *const KgfReport, out: *mut *mut c_char, f: fn(&VerificationReport) -> String) -> KgfStatus {
    guard(|| {
        let report = report.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        put_string(out, f(&report.0));
        Ok(())
    })
}

/// The text report ending in `Checks passed: True|False`.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_report_render(report: *const KgfReport, out: *mut *mut c_char) -> KgfStatus {
    report_string(report, out, render_report)
}

/// The diagnostics as a JSON array.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_report_to_json(report: *const KgfReport, out: *mut *mut c_char) -> KgfStatus {
    report_string(report, out, report_to_json)
}

/// # Safety
/// `report` must be null or a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn kgf_report_free(report: *mut KgfReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Executes `plan` in `mode`, writing artifacts under `out_dir`.
/// `bindings_path` may be null when the plan has no placeholders. On success
/// `*summary` holds a JSON object with the artifact paths and mean Dice.
///
/// # Safety
/// Handles must be live, strings NUL-terminated, `summary` writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_execute(
    plan: *const KgfPlan,
    registry: *const KgfRegistry,
    bindings_path: *const c_char,
    mode: KgfMode,
    out_dir: *const c_char,
    summary: *mut *mut c_char,
) -> KgfStatus {
    guard(|| {
        let plan = plan.as_ref().ok_or_else(|| null("plan"))?;
        let registry = registry.as_ref().ok_or_else(|| null("registry"))?;
        if summary.is_null() {
            return Err(null("summary"));
        }
        let out_dir = Path::new(text(out_dir, "out_dir")?);
        let mode = match mode {
            KgfMode::Learn => Mode::Learn,
            KgfMode::Think => Mode::Think,
        };
        let bindings = if bindings_path.is_null() {
            RunBindings::new(mode, out_dir)
        } else {
            load_bindings(Path::new(text(bindings_path, "bindings_path")?), mode, out_dir)
                .map_err(|e| (KgfStatus::InvalidArgument, e.to_string()))?
        };
        let r = execute(&plan.0, &registry.0, &bindings).map_err(|e| match e {
            ExecError::NotVerified(report) => (KgfStatus::VerifyFailed, report),
            other => (KgfStatus::ExecError, other.to_string()),
        })?;
        let value = json!({
            "mode": if mode == Mode::Learn { "learn" } else { "think" },
            "messages": r.blackboard.len(),
            "blackboard_file": r.blackboard_file,
            "weights": r.weights,
            "masks": r.masks,
            "overlays": r.overlays,
            "mean_dice": r.mean_dice(None),
        });
        put_string(summary, serde_json::to_string(&value).expect("summary serializes"));
        Ok(())
    })
}

/// Extracts the plan JSON from a model completion into `*out`.
///
/// # Safety
/// `completion` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kgf_extract_json(completion: *const c_char, out: *mut *mut c_char) -> KgfStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let json = extract_json(text(completion, "completion")?).map_err(|e| (KgfStatus::ExtractionFailed, e.to_string()))?;
        put_string(out, json);
        Ok(())
    })
}
