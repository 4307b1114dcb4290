//! C interface to the biot-dd solvers.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every function returns a
//! [`BiotDdStatus`]. On failure a message is available from
//! [`biot_dd_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, c_double, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use biot_dd::app::{run_experiment, Setup};
use biot_dd::config::{ProblemConfig, RunConfig};
use biot_dd::interface::Physics;
use biot_dd::output::cell_averages;
use biot_dd::schemes::SchemeKind;
use biot_dd::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiotDdStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or not valid UTF-8.
    InvalidArgument = 2,
    /// The configuration was rejected.
    Config = 3,
    /// A file could not be read or written.
    Io = 4,
    /// An interface solver did not converge or a local system was singular.
    Solver = 5,
    /// The requested quantity does not exist for this run.
    NotAvailable = 6,
    /// The caller's buffer is too small; the required length was written.
    BufferTooSmall = 7,
    /// Any other failure, including internal panics.
    Internal = 8,
}

/// Interface solver whose mean iteration count is queried.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiotDdSolver {
    /// GMRES on the coupled interface problem.
    Gmres = 0,
    /// CG on the elasticity interface problem.
    CgElasticity = 1,
    /// CG on the Darcy interface problem.
    CgDarcy = 2,
}

/// Run configuration.
pub struct BiotDdConfig {
    inner: RunConfig,
}

/// Summary and final fields of a completed run.
pub struct BiotDdResult {
    scheme: SchemeKind,
    steps: usize,
    mean_iterations: Vec<(Physics, f64)>,
    errors: Option<[f64; 4]>,
    stability_ratio: f64,
    pressure: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BiotDdStatus {
    match e {
        Error::Config { .. } | Error::FieldParse { .. } | Error::OutOfRange(_) => BiotDdStatus::Config,
        Error::InvalidMesh(_)
        | Error::NonDivisiblePartition { .. }
        | Error::DegenerateCell { .. }
        | Error::NonPositiveJacobian { .. }
        | Error::InvalidMaterial { .. } => BiotDdStatus::Config,
        Error::Io(_) | Error::Csv(_) => BiotDdStatus::Io,
        Error::NoConvergence { .. } | Error::Singular { .. } | Error::NotPositiveDefinite { .. } => BiotDdStatus::Solver,
        Error::Step { source, .. } => status_of(source),
        _ => BiotDdStatus::Internal,
    }
}

struct Failure(BiotDdStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BiotDdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BiotDdStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let what = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {what}"));
            BiotDdStatus::Internal
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(BiotDdStatus::NullPointer, format!("{what} is null"))
}

unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(BiotDdStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn config_mut<'a>(c: *mut BiotDdConfig) -> Result<&'a mut RunConfig, Failure> {
    c.as_mut().map(|c| &mut c.inner).ok_or_else(|| null("config"))
}

unsafe fn result_ref<'a>(r: *const BiotDdResult) -> Result<&'a BiotDdResult, Failure> {
    r.as_ref().ok_or_else(|| null("result"))
}

fn validated(c: &RunConfig) -> Result<(), Failure> {
    c.validate().map_err(Failure::from)
}

/// Message of the last failure on this thread, or null if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn biot_dd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn biot_dd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a TOML config file. Relative paths inside it resolve against its
/// directory.
///
/// # Safety
/// `path` must be a null-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_config_load(path: *const c_char, out: *mut *mut BiotDdConfig) -> BiotDdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = RunConfig::load(Path::new(text(path, "path")?))?;
        *out = Box::into_raw(Box::new(BiotDdConfig { inner }));
        Ok(())
    })
}

/// Parses a config from TOML text.
///
/// # Safety
/// `toml` must be a null-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_config_parse(toml: *const c_char, out: *mut *mut BiotDdConfig) -> BiotDdStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = RunConfig::from_toml(text(toml, "toml")?)?;
        *out = Box::into_raw(Box::new(BiotDdConfig { inner }));
        Ok(())
    })
}

/// Selects the scheme: "monolithic", "ds" or "fs".
///
/// # Safety
/// `config` must come from this library; `scheme` must be null-terminated.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_config_set_scheme(config: *mut BiotDdConfig, scheme: *const c_char) -> BiotDdStatus {
    guard(|| {
        let c = config_mut(config)?;
        let kind: SchemeKind = text(scheme, "scheme")?.parse()?;
        c.solver.scheme = kind;
        Ok(())
    })
}

/// Sets an `n x n` mesh split into `p x p` subdomains.
///
/// # Safety
/// `config` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_config_set_mesh(config: *mut BiotDdConfig, cells: usize, subdomains: usize) -> BiotDdStatus {
    guard(|| {
        let c = config_mut(config)?;
        let mut next = c.clone();
        next.mesh.nx = cells;
        next.mesh.ny = cells;
        next.mesh.px = subdomains;
        next.mesh.py = subdomains;
        validated(&next)?;
        *c = next;
        Ok(())
    })
}

/// Sets the time step and number of steps.
///
/// # Safety
/// `config` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_config_set_time(config: *mut BiotDdConfig, dt: c_double, steps: usize) -> BiotDdStatus {
    guard(|| {
        let c = config_mut(config)?;
        if !(dt > 0.0 && dt.is_finite()) || steps == 0 {
            return Err(Failure(BiotDdStatus::InvalidArgument, format!("need dt > 0 and steps > 0, got {dt} and {steps}")));
        }
        c.time.dt = dt;
        c.time.steps = Some(steps);
        c.time.final_time = None;
        Ok(())
    })
}

/// Sets the storage coefficient `c0`.
///
/// # Safety
/// `config` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_config_set_storativity(config: *mut BiotDdConfig, c0: c_double) -> BiotDdStatus {
    guard(|| {
        let c = config_mut(config)?;
        if !(c0 >= 0.0 && c0.is_finite()) {
            return Err(Failure(BiotDdStatus::InvalidArgument, format!("storativity must be non-negative, got {c0}")));
        }
        match &mut c.problem {
            ProblemConfig::Manufactured(m) => m.storativity = c0,
            ProblemConfig::Heterogeneous(h) => h.storativity = c0,
        }
        Ok(())
    })
}

/// Releases a config. Null is ignored.
///
/// # Safety
/// `config` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_config_free(config: *mut BiotDdConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs a config. Files are written to `output_dir` if it is non-null,
/// otherwise to the config's output directory if it has one.
///
/// # Safety
/// `config` must come from this library; `output_dir` is null or
/// null-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_run(
    config: *const BiotDdConfig,
    output_dir: *const c_char,
    out: *mut *mut BiotDdResult,
) -> BiotDdStatus {
    guard(|| {
        let c = &config.as_ref().ok_or_else(|| null("config"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let dir = if output_dir.is_null() { None } else { Some(Path::new(text(output_dir, "output_dir")?)) };
        let r = run_experiment(c, dir)?;
        let setup = Setup::new(c)?;
        let pressure = cell_averages(&setup.disc, &r.final_state.fields).pressure;
        *out = Box::into_raw(Box::new(BiotDdResult {
            scheme: r.scheme,
            steps: r.summary.steps,
            stability_ratio: r.summary.monitor.ratio(r.scheme),
            mean_iterations: r.summary.mean_iterations,
            errors: r.errors,
            pressure,
        }));
        Ok(())
    })
}

/// Number of time steps taken.
///
/// # Safety
/// `result` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_result_steps(result: *const BiotDdResult, out: *mut usize) -> BiotDdStatus {
    guard(|| {
        let r = result_ref(result)?;
        *out.as_mut().ok_or_else(|| null("out"))? = r.steps;
        Ok(())
    })
}

/// Mean iterations per step of `solver`; `NotAvailable` if the run's
/// scheme does not use it.
///
/// # Safety
/// `result` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_result_mean_iterations(
    result: *const BiotDdResult,
    solver: BiotDdSolver,
    out: *mut c_double,
) -> BiotDdStatus {
    guard(|| {
        let r = result_ref(result)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let physics = match solver {
            BiotDdSolver::Gmres => Physics::Monolithic,
            BiotDdSolver::CgElasticity => Physics::Elasticity,
            BiotDdSolver::CgDarcy => Physics::Darcy,
        };
        let v = r.mean_iterations.iter().find(|(p, _)| *p == physics).map(|(_, v)| *v);
        *out = v.ok_or_else(|| Failure(BiotDdStatus::NotAvailable, format!("{} runs do not use {solver:?}", r.scheme)))?;
        Ok(())
    })
}

/// Relative errors `[z, p, sigma, u]` against the exact solution;
/// `NotAvailable` for problems without one.
///
/// # Safety
/// `result` must come from this library; `out` must hold 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_result_errors(result: *const BiotDdResult, out: *mut c_double) -> BiotDdStatus {
    guard(|| {
        let r = result_ref(result)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let e = r.errors.ok_or_else(|| Failure(BiotDdStatus::NotAvailable, "no exact solution for this problem".into()))?;
        std::slice::from_raw_parts_mut(out, 4).copy_from_slice(&e);
        Ok(())
    })
}

/// Stability monitor ratio of the run.
///
/// # Safety
/// `result` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_result_stability_ratio(result: *const BiotDdResult, out: *mut c_double) -> BiotDdStatus {
    guard(|| {
        let r = result_ref(result)?;
        *out.as_mut().ok_or_else(|| null("out"))? = r.stability_ratio;
        Ok(())
    })
}

/// Copies the final cell-averaged pressure (global cell order, row by row
/// from the bottom) into `buffer`. The number of cells is written to
/// `len` in every case; `BufferTooSmall` if `capacity` is less.
///
/// # Safety
/// `result` must come from this library; `buffer` must hold `capacity`
/// doubles (may be null when `capacity` is 0); `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_result_pressure(
    result: *const BiotDdResult,
    buffer: *mut c_double,
    capacity: usize,
    len: *mut usize,
) -> BiotDdStatus {
    guard(|| {
        let r = result_ref(result)?;
        let n = r.pressure.len();
        *len.as_mut().ok_or_else(|| null("len"))? = n;
        if capacity < n {
            return Err(Failure(BiotDdStatus::BufferTooSmall, format!("need {n} values, buffer holds {capacity}")));
        }
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        std::slice::from_raw_parts_mut(buffer, n).copy_from_slice(&r.pressure);
        Ok(())
    })
}

/// Releases a result. Null is ignored.
///
/// # Safety
/// `result` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn biot_dd_result_free(result: *mut BiotDdResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
