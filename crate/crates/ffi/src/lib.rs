//! C ABI over `funnel-core`.
//!
//! Every entry point returns an [`FcStatus`]; on failure a message for the
//! calling thread is available from [`fc_last_error`]. Scenarios and runs
//! are opaque handles that must be released with their `_free` function.
//! Strings returned by the library are owned by the caller and released
//! with [`fc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use funnel_core::cli::{initial_feasibility, report_json, run_one, RunResult};
use funnel_core::config::ScenarioConfig;
use funnel_core::controllers::{new_fc_control, GainFunctions, NewFunnelController};
use funnel_core::errchain::{xi_eval, DerivativeStack, ErrorChainParams};
use funnel_core::funnels::FunnelFunction;
use funnel_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Singularity = 4,
    NonFinite = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Parsed scenario.
pub struct FcScenario {
    config: ScenarioConfig,
}

/// Finished closed-loop run with its log and report.
pub struct FcRun {
    result: RunResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn status_of(err: &Error) -> FcStatus {
    match err {
        Error::Usage(_) => FcStatus::InvalidArgument,
        Error::Config(_) | Error::Json(_) => FcStatus::Config,
        Error::GainSingularity { .. } | Error::StageSingularity { .. } => FcStatus::Singularity,
        Error::NonFinite { .. } => FcStatus::NonFinite,
        Error::Io(_) | Error::Csv(_) => FcStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), FcStatus>) -> FcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FcStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            FcStatus::Panic
        }
    }
}

fn fail(err: Error) -> FcStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn invalid(msg: &str) -> FcStatus {
    set_error(msg);
    FcStatus::InvalidArgument
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, FcStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(FcStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(&format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], FcStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(FcStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], FcStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(FcStatus::NullPointer);
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), FcStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        return Err(FcStatus::NullPointer);
    }
    Ok(())
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failure on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn fc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Stage `i` (1-based) of the auxiliary error chain for the stack `z` of
/// `r * m` values. Writes `m` values to `out`.
///
/// # Safety
/// `z` must point to `r * m` doubles and `out` to `m` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_xi_eval(k: f64, r: usize, m: usize, z: *const f64, i: usize, out: *mut f64) -> FcStatus {
    guard(|| {
        let p = ErrorChainParams::new(k, r, m).map_err(fail)?;
        let z = DerivativeStack::new(r, m, slice_arg(z, r.saturating_mul(m), "z")?.to_vec()).map_err(fail)?;
        let v = xi_eval(&p, i, &z).map_err(fail)?;
        out_slice(out, m, "out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Constant-gain control law with the default gain functions for a funnel
/// with constants `alpha`, `beta`. Writes `m` values to `u` and the gain
/// argument to `w` (if non-null).
///
/// # Safety
/// `z` must point to `r * m` doubles, `u` to `m` writable doubles and `w`
/// must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn fc_new_fc_control(
    k: f64,
    alpha: f64,
    beta: f64,
    r: usize,
    m: usize,
    z: *const f64,
    u: *mut f64,
    w: *mut f64,
) -> FcStatus {
    guard(|| {
        let p = ErrorChainParams::new(k, r, m).map_err(fail)?;
        // only alpha and beta enter the control law
        let funnel = FunnelFunction::constant(beta / alpha + 1.0, alpha, beta).map_err(fail)?;
        let c = NewFunnelController::new(p, &funnel, GainFunctions::default());
        let z = DerivativeStack::new(r, m, slice_arg(z, r.saturating_mul(m), "z")?.to_vec()).map_err(fail)?;
        let out = new_fc_control(&c, 0.0, &z).map_err(fail)?;
        out_slice(u, m, "u")?.copy_from_slice(&out.u);
        if !w.is_null() {
            *w = out.w;
        }
        Ok(())
    })
}

/// Parses a scenario from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_scenario_from_json(json: *const c_char, out: *mut *mut FcScenario) -> FcStatus {
    guard(|| {
        non_null(out, "out")?;
        let config = ScenarioConfig::from_json_str(str_arg(json, "json")?).map_err(fail)?;
        *out = Box::into_raw(Box::new(FcScenario { config }));
        Ok(())
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_scenario_from_file(path: *const c_char, out: *mut *mut FcScenario) -> FcStatus {
    guard(|| {
        non_null(out, "out")?;
        let config = ScenarioConfig::load(Path::new(str_arg(path, "path")?), &[]).map_err(fail)?;
        *out = Box::into_raw(Box::new(FcScenario { config }));
        Ok(())
    })
}

/// Applies a `key=value` override; the scenario is unchanged on failure.
///
/// # Safety
/// `scn` must be a live scenario handle and `assignment` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fc_scenario_set(scn: *mut FcScenario, assignment: *const c_char) -> FcStatus {
    guard(|| {
        non_null(scn, "scenario")?;
        let a = str_arg(assignment, "assignment")?.to_string();
        let s = &mut *scn;
        s.config = s.config.with_overrides(&[a]).map_err(fail)?;
        Ok(())
    })
}

/// Number of controllers configured in the scenario.
///
/// # Safety
/// `scn` must be a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn fc_scenario_controller_count(scn: *const FcScenario) -> usize {
    if scn.is_null() {
        return 0;
    }
    (*scn).config.controller_specs().map_or(0, |v| v.len())
}

/// # Safety
/// `scn` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn fc_scenario_free(scn: *mut FcScenario) {
    if !scn.is_null() {
        drop(Box::from_raw(scn));
    }
}

/// Checks the initial error stack. Writes 1/0 to `feasible`, and the
/// per-stage margins to `margins` (capacity `cap`, count to `n_stages`).
///
/// # Safety
/// `scn` must be a live handle; `feasible` and `n_stages` writable;
/// `margins` null or writable for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn fc_check_feasibility(
    scn: *const FcScenario,
    feasible: *mut i32,
    margins: *mut f64,
    cap: usize,
    n_stages: *mut usize,
) -> FcStatus {
    guard(|| {
        non_null(scn, "scenario")?;
        non_null(feasible, "feasible")?;
        non_null(n_stages, "n_stages")?;
        let (rep, _) = initial_feasibility(&(*scn).config).map_err(fail)?;
        *feasible = i32::from(rep.feasible);
        *n_stages = rep.margins.len();
        if !margins.is_null() {
            if cap < rep.margins.len() {
                set_error(format!("need room for {} margins", rep.margins.len()));
                return Err(FcStatus::BufferTooSmall);
            }
            out_slice(margins, cap, "margins")?[..rep.margins.len()].copy_from_slice(&rep.margins);
        }
        Ok(())
    })
}

/// Simulates controller `index` of the scenario. A run that ends in a
/// violation or singularity still succeeds here; inspect
/// [`fc_run_exit_code`].
///
/// # Safety
/// `scn` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_simulate(scn: *const FcScenario, index: usize, out: *mut *mut FcRun) -> FcStatus {
    guard(|| {
        non_null(scn, "scenario")?;
        non_null(out, "out")?;
        let cfg = &(*scn).config;
        let specs = cfg.controller_specs().map_err(fail)?;
        let spec = specs.get(index).ok_or_else(|| invalid("controller index out of range"))?;
        let result = run_one(cfg, spec).map_err(fail)?;
        *out = Box::into_raw(Box::new(FcRun { result }));
        Ok(())
    })
}

/// 0 success, 2 funnel violation, 3 singularity or abort; -1 for a null handle.
///
/// # Safety
/// `run` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn fc_run_exit_code(run: *const FcRun) -> i32 {
    if run.is_null() {
        return -1;
    }
    (*run).result.report.exit_code
}

/// Number of logged samples.
///
/// # Safety
/// `run` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn fc_run_len(run: *const FcRun) -> usize {
    if run.is_null() {
        return 0;
    }
    (*run).result.outcome.log.len()
}

/// Copies the CSV column `name` (e.g. `"t"`, `"norm_e"`, `"u"`) into `buf`.
///
/// # Safety
/// `run` must be a live handle, `name` NUL-terminated, `buf` writable for
/// `cap` doubles and `written` writable.
#[no_mangle]
pub unsafe extern "C" fn fc_run_column(
    run: *const FcRun,
    name: *const c_char,
    buf: *mut f64,
    cap: usize,
    written: *mut usize,
) -> FcStatus {
    guard(|| {
        non_null(run, "run")?;
        non_null(written, "written")?;
        let name = str_arg(name, "name")?;
        let col = (*run)
            .result
            .outcome
            .log
            .column(name)
            .ok_or_else(|| invalid(&format!("no column named `{name}`")))?;
        *written = col.len();
        if cap < col.len() {
            set_error(format!("column has {} samples", col.len()));
            return Err(FcStatus::BufferTooSmall);
        }
        out_slice(buf, cap, "buf")?[..col.len()].copy_from_slice(&col);
        Ok(())
    })
}

/// The run report as JSON; release with [`fc_string_free`]. Null on failure.
///
/// # Safety
/// `run` must be null or a live run handle.
#[no_mangle]
pub unsafe extern "C" fn fc_run_report_json(run: *const FcRun) -> *mut c_char {
    if run.is_null() {
        set_error("run is null");
        return ptr::null_mut();
    }
    match report_json(&(*run).result.report) {
        Ok(s) => owned_string(s),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `run` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn fc_run_free(run: *mut FcRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
