//! C ABI over the `feederopt` library.
//!
//! Objects are opaque handles created by `fo_*_new`/`fo_*_from_*` and
//! released by the matching `fo_*_free`. Every fallible call returns an
//! [`FoStatus`]; on failure a description is kept per thread and can be read
//! with [`fo_last_error`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use feederopt::config::Config;
use feederopt::controllers::{ControllerKind, OptimizationResult};
use feederopt::experiments::{solve_scenario, write_sweep, ScenarioResult, ScenarioSpec, ScenarioStatus};
use feederopt::feeder::PlacementKind;
use feederopt::Error;

/// Return code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Solver = 5,
    OutOfRange = 6,
    Panic = 7,
}

/// PV block position, passed as `uint32_t`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoPlacement {
    Front = 0,
    Rear = 1,
}

/// Controller, passed as `uint32_t`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoController {
    Global = 0,
    Local = 1,
    NoControl = 2,
    Passive = 3,
}

/// Outcome class of a scenario.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoScenarioStatus {
    Solved = 0,
    Infeasible = 1,
    MaxIter = 2,
    Violation = 3,
    Error = 4,
}

/// Scalar results of one scenario. Undefined quantities are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct FoSummary {
    pub status: FoScenarioStatus,
    pub delta_v: f64,
    pub loss_pu: f64,
    pub savings: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Nodes excluding the substation; profile arrays have `nodes + 1` rows.
    pub nodes: usize,
    pub slots: usize,
}

/// Study configuration handle.
pub struct FoConfig(Config);

/// Solved scenario handle.
pub struct FoScenario {
    result: ScenarioResult,
    outcome: Option<OptimizationResult>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    let c = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: FoStatus, msg: impl Into<String>) -> FoStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> FoStatus {
    let status = match &e {
        Error::Config(_) => FoStatus::Config,
        Error::Io { .. } | Error::Csv(_) => FoStatus::Io,
        Error::Qp(_) | Error::Divergence { .. } => FoStatus::Solver,
        _ => FoStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into `FoStatus::Panic`.
fn guard(f: impl FnOnce() -> FoStatus) -> FoStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(FoStatus::Panic, msg)
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, FoStatus> {
    if p.is_null() {
        return Err(fail(FoStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(FoStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

fn placement_arg(v: u32) -> Result<PlacementKind, FoStatus> {
    match v {
        0 => Ok(PlacementKind::Front),
        1 => Ok(PlacementKind::Rear),
        _ => Err(fail(FoStatus::InvalidArgument, format!("unknown placement code {v}"))),
    }
}

fn controller_arg(v: u32) -> Result<ControllerKind, FoStatus> {
    match v {
        0 => Ok(ControllerKind::Global),
        1 => Ok(ControllerKind::Local),
        2 => Ok(ControllerKind::NoControl),
        3 => Ok(ControllerKind::Passive),
        _ => Err(fail(FoStatus::InvalidArgument, format!("unknown controller code {v}"))),
    }
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next `fo_*` call on the same thread.
#[no_mangle]
pub extern "C" fn fo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default study configuration.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn fo_config_new(out: *mut *mut FoConfig) -> FoStatus {
    guard(|| {
        if out.is_null() {
            return fail(FoStatus::NullPointer, "out is null");
        }
        put(out, FoConfig(Config::default()));
        FoStatus::Ok
    })
}

/// Parses a TOML configuration from a string.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fo_config_from_toml(text: *const c_char, out: *mut *mut FoConfig) -> FoStatus {
    guard(|| {
        if out.is_null() {
            return fail(FoStatus::NullPointer, "out is null");
        }
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Config::from_toml_str(text) {
            Ok(cfg) => {
                put(out, FoConfig(cfg));
                FoStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Reads a TOML configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fo_config_from_path(path: *const c_char, out: *mut *mut FoConfig) -> FoStatus {
    guard(|| {
        if out.is_null() {
            return fail(FoStatus::NullPointer, "out is null");
        }
        let path = match str_arg(path, "path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        match Config::from_path(Path::new(path)) {
            Ok(cfg) => {
                put(out, FoConfig(cfg));
                FoStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Sets the number of worker threads used by sweeps; 0 uses every core.
///
/// # Safety
/// `config` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn fo_config_set_workers(config: *mut FoConfig, workers: usize) -> FoStatus {
    guard(|| match config.as_mut() {
        Some(c) => {
            c.0.workers = workers;
            FoStatus::Ok
        }
        None => fail(FoStatus::NullPointer, "config is null"),
    })
}

/// Releases a configuration. Null is ignored.
///
/// # Safety
/// `config` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fo_config_free(config: *mut FoConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Solves one scenario on the configured feeder. `placement` is an
/// `FoPlacement` and `controller` an `FoController` value. A scenario that
/// the solver cannot settle still yields a handle; inspect its summary.
///
/// # Safety
/// `config` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fo_solve_scenario(
    config: *const FoConfig,
    s_max: f64,
    penetration: f64,
    placement: u32,
    controller: u32,
    out: *mut *mut FoScenario,
) -> FoStatus {
    guard(|| {
        let Some(cfg) = config.as_ref() else {
            return fail(FoStatus::NullPointer, "config is null");
        };
        if out.is_null() {
            return fail(FoStatus::NullPointer, "out is null");
        }
        let (placement, controller) = match (placement_arg(placement), controller_arg(controller)) {
            (Ok(p), Ok(c)) => (p, c),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        let spec = ScenarioSpec {
            s_max,
            a: penetration,
            placement,
            controller,
            seed: cfg.0.seed,
        };
        match solve_scenario(&cfg.0, spec) {
            Ok((result, outcome)) => {
                put(out, FoScenario { result, outcome });
                FoStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Fills `out` with the scenario's scalar results.
///
/// # Safety
/// `scenario` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fo_scenario_summary(scenario: *const FoScenario, out: *mut FoSummary) -> FoStatus {
    guard(|| {
        let Some(sc) = scenario.as_ref() else {
            return fail(FoStatus::NullPointer, "scenario is null");
        };
        let Some(out) = out.as_mut() else {
            return fail(FoStatus::NullPointer, "out is null");
        };
        let r = &sc.result;
        let m = r.metrics.as_ref();
        *out = FoSummary {
            status: match r.status {
                ScenarioStatus::Solved => FoScenarioStatus::Solved,
                ScenarioStatus::Infeasible => FoScenarioStatus::Infeasible,
                ScenarioStatus::MaxIter => FoScenarioStatus::MaxIter,
                ScenarioStatus::Violation(_) => FoScenarioStatus::Violation,
                ScenarioStatus::Error(_) => FoScenarioStatus::Error,
            },
            delta_v: m.map_or(f64::NAN, |m| m.delta_v),
            loss_pu: m.map_or(f64::NAN, |m| m.loss),
            savings: m.and_then(|m| m.savings).unwrap_or(f64::NAN),
            iterations: r.iterations,
            primal_residual: r.primal_residual,
            dual_residual: r.dual_residual,
            nodes: sc.outcome.as_ref().map_or(0, |o| o.state.n()),
            slots: sc.outcome.as_ref().map_or(0, |o| o.state.slots()),
        };
        FoStatus::Ok
    })
}

/// Which per-node, per-slot series to read.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoSeries {
    /// Per-unit voltage magnitude.
    Voltage = 0,
    ActiveFlow = 1,
    ReactiveFlow = 2,
    BatteryRate = 3,
    InverterVar = 4,
}

/// Copies one series into `buf` as `(nodes + 1) * slots` values, node-major
/// (row 0 is the substation). `series` is an `FoSeries` value. Returns
/// `OutOfRange` if `len` is too small; `*written` then holds the needed size.
///
/// # Safety
/// `scenario` must be a live handle, `buf` valid for `len` doubles, and
/// `written` writable.
#[no_mangle]
pub unsafe extern "C" fn fo_scenario_series(
    scenario: *const FoScenario,
    series: u32,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> FoStatus {
    guard(|| {
        let Some(sc) = scenario.as_ref() else {
            return fail(FoStatus::NullPointer, "scenario is null");
        };
        if written.is_null() {
            return fail(FoStatus::NullPointer, "written is null");
        }
        let Some(o) = sc.outcome.as_ref() else {
            *written = 0;
            return fail(FoStatus::Solver, "scenario has no solution");
        };
        let rows = match series {
            0 => &o.state.v,
            1 => &o.state.p,
            2 => &o.state.q,
            3 => &o.schedule.beta,
            4 => &o.schedule.q_g,
            _ => return fail(FoStatus::InvalidArgument, format!("unknown series code {series}")),
        };
        let need: usize = rows.iter().map(Vec::len).sum();
        *written = need;
        if len < need {
            return fail(FoStatus::OutOfRange, format!("buffer holds {len} values, {need} needed"));
        }
        if buf.is_null() {
            return fail(FoStatus::NullPointer, "buf is null");
        }
        let dst = std::slice::from_raw_parts_mut(buf, need);
        for (chunk, row) in dst.chunks_mut(rows.first().map_or(1, Vec::len).max(1)).zip(rows) {
            chunk.copy_from_slice(row);
        }
        FoStatus::Ok
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fo_scenario_free(scenario: *mut FoScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the configured sweep, writing `results.csv` and `comparison.csv`
/// into `out_dir`. `inconclusive` (may be null) receives the number of
/// scenarios that were neither solved nor proven infeasible.
///
/// # Safety
/// `config` must be a live handle and `out_dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fo_run_sweep(
    config: *const FoConfig,
    out_dir: *const c_char,
    inconclusive: *mut usize,
) -> FoStatus {
    guard(|| {
        let Some(cfg) = config.as_ref() else {
            return fail(FoStatus::NullPointer, "config is null");
        };
        let dir = match str_arg(out_dir, "out_dir") {
            Ok(d) => d,
            Err(s) => return s,
        };
        match write_sweep(&cfg.0, Path::new(dir), false) {
            Ok(results) => {
                if let Some(n) = inconclusive.as_mut() {
                    *n = results.iter().filter(|r| !r.status.is_conclusive()).count();
                }
                FoStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_map_to_kinds() {
        assert_eq!(placement_arg(FoPlacement::Rear as u32), Ok(PlacementKind::Rear));
        assert_eq!(controller_arg(FoController::NoControl as u32), Ok(ControllerKind::NoControl));
        assert_eq!(placement_arg(9), Err(FoStatus::InvalidArgument));
        assert!(!fo_last_error().is_null());
    }

    #[test]
    fn panics_become_status() {
        assert_eq!(guard(|| panic!("boom")), FoStatus::Panic);
        let msg = unsafe { CStr::from_ptr(fo_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "boom");
        assert_eq!(guard(|| FoStatus::Ok), FoStatus::Ok);
        assert!(fo_last_error().is_null());
    }
}
