//! C interface to dispersive-forge.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `df_*_new`-style constructor and released with the matching `df_*_free`.
//! Fallible calls return a [`DfStatus`] and write their result through an
//! out-pointer; the message of the most recent failure on the calling thread
//! is available from [`df_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dispersive_forge::coeff::reconstruction_error;
use dispersive_forge::expr::parse;
use dispersive_forge::harness::coupled_epsilon;
use dispersive_forge::mollify::mollify;
use dispersive_forge::nonlinearity::{dispersion_lambda, evaluate_rhs, preset, NonlinearitySpec};
use dispersive_forge::solver::{integrate, OutputPolicy, SolverConfig, Termination, Trajectory};
use dispersive_forge::{ForgeError, SpectralGrid, StateFunction};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Evaluation = 3,
    Degenerate = 4,
    UnknownPreset = 5,
    Config = 6,
    Harness = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DfTermination {
    ReachedTEnd = 0,
    BlowupDetected = 1,
    DispersionDegenerate = 2,
    StepUnderflow = 3,
}

/// Periodic grid of `N` points on `[0, L)`.
pub struct DfGrid(SpectralGrid);
/// Grid values of a real field at one time.
pub struct DfState(StateFunction);
/// A right-hand side `f(z3, z2, z1, z0, x, t)` with its partials.
pub struct DfSpec(NonlinearitySpec);
/// Snapshots and bookkeeping of one integration.
pub struct DfTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &ForgeError) -> DfStatus {
    match e {
        ForgeError::Argument(_) | ForgeError::Regularity(_) => DfStatus::InvalidArgument,
        ForgeError::Evaluation { .. } => DfStatus::Evaluation,
        ForgeError::Degeneracy(_) => DfStatus::Degenerate,
        ForgeError::UnknownPreset { .. } => DfStatus::UnknownPreset,
        ForgeError::Config(_) | ForgeError::Parse { .. } | ForgeError::Io(_) => DfStatus::Config,
        ForgeError::Harness(_) => DfStatus::Harness,
    }
}

enum Fail {
    Null(&'static str),
    Forge(ForgeError),
}

impl From<ForgeError> for Fail {
    fn from(e: ForgeError) -> Self {
        Fail::Forge(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> DfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DfStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer passed for `{what}`"));
            DfStatus::NullPointer
        }
        Ok(Err(Fail::Forge(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            DfStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null(what));
    }
    *out = value;
    Ok(())
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Forge(ForgeError::Argument(format!("`{what}` is not valid UTF-8"))))
}

/// Copies the last error message (NUL-terminated, truncated to `cap`) into
/// `buf` and returns the full message length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn df_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// `ε = δ⁵`.
#[no_mangle]
pub extern "C" fn df_coupled_epsilon(delta: f64) -> f64 {
    coupled_epsilon(delta)
}

/// # Safety
/// `out` must be valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn df_grid_new(length: f64, n: usize, out: *mut *mut DfGrid) -> DfStatus {
    guard(|| put(out, DfGrid(SpectralGrid::new(length, n)?), "out"))
}

/// # Safety
/// `grid` must be null or a pointer from [`df_grid_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn df_grid_free(grid: *mut DfGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Number of points, or 0 for a null grid.
///
/// # Safety
/// `grid` must be null or a live grid.
#[no_mangle]
pub unsafe extern "C" fn df_grid_len(grid: *const DfGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.n())
}

/// # Safety
/// `values` must be valid for `len` reads; `grid` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_state_from_values(
    grid: *const DfGrid,
    values: *const f64,
    len: usize,
    time: f64,
    out: *mut *mut DfState,
) -> DfStatus {
    guard(|| {
        let g = get(grid, "grid")?;
        if values.is_null() {
            return Err(Fail::Null("values"));
        }
        let v = std::slice::from_raw_parts(values, len).to_vec();
        put(out, DfState(StateFunction::from_values(&g.0, v, time)?), "out")
    })
}

/// Samples the default initial profile of a named preset.
///
/// # Safety
/// `name` must be a NUL-terminated string; `grid` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_state_preset_data(
    name: *const c_char,
    grid: *const DfGrid,
    out: *mut *mut DfState,
) -> DfStatus {
    guard(|| {
        let p = preset(text(name, "name")?)?;
        let g = get(grid, "grid")?;
        put(out, DfState(p.data.sample(&g.0)?), "out")
    })
}

/// # Safety
/// `state` must be null or a live state.
#[no_mangle]
pub unsafe extern "C" fn df_state_free(state: *mut DfState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// # Safety
/// `state` must be null or a live state.
#[no_mangle]
pub unsafe extern "C" fn df_state_len(state: *const DfState) -> usize {
    state.as_ref().map_or(0, |s| s.0.values().len())
}

/// # Safety
/// `state` must be null or a live state.
#[no_mangle]
pub unsafe extern "C" fn df_state_time(state: *const DfState) -> f64 {
    state.as_ref().map_or(f64::NAN, |s| s.0.time())
}

/// Copies the grid values into `out`, which must hold exactly
/// [`df_state_len`] entries.
///
/// # Safety
/// `out` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn df_state_values(state: *const DfState, out: *mut f64, len: usize) -> DfStatus {
    guard(|| {
        let s = get(state, "state")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let v = s.0.values();
        if len != v.len() {
            return Err(ForgeError::Argument(format!("buffer holds {len} values, state has {}", v.len())).into());
        }
        ptr::copy_nonoverlapping(v.as_ptr(), out, len);
        Ok(())
    })
}

/// # Safety
/// `state` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_state_sobolev_norm(state: *const DfState, s: f64, out: *mut f64) -> DfStatus {
    guard(|| {
        let u = get(state, "state")?;
        write(out, u.0.sobolev_norm(s)?, "out")
    })
}

/// # Safety
/// `state` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_mollify(state: *const DfState, delta: f64, out: *mut *mut DfState) -> DfStatus {
    guard(|| {
        let u = get(state, "state")?;
        put(out, DfState(mollify(&u.0, delta)?.result), "out")
    })
}

/// # Safety
/// `name` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_spec_preset(name: *const c_char, out: *mut *mut DfSpec) -> DfStatus {
    guard(|| put(out, DfSpec(preset(text(name, "name")?)?.spec), "out"))
}

/// Builds a right-hand side from an expression in `z3 z2 z1 z0 x t`, with
/// symbolic partials through `max_order`.
///
/// # Safety
/// `name` and `expr` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_spec_from_expr(
    name: *const c_char,
    expr: *const c_char,
    max_order: usize,
    out: *mut *mut DfSpec,
) -> DfStatus {
    guard(|| {
        let f = parse(text(expr, "expr")?)?;
        let spec = NonlinearitySpec::from_expr(text(name, "name")?, f, max_order)?;
        put(out, DfSpec(spec), "out")
    })
}

/// # Safety
/// `spec` must be null or a live spec.
#[no_mangle]
pub unsafe extern "C" fn df_spec_free(spec: *mut DfSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// # Safety
/// `spec`, `state` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_evaluate_rhs(
    spec: *const DfSpec,
    state: *const DfState,
    out: *mut *mut DfState,
) -> DfStatus {
    guard(|| {
        let (f, u) = (get(spec, "spec")?, get(state, "state")?);
        put(out, DfState(evaluate_rhs(&f.0, &u.0)?), "out")
    })
}

/// `max 1/|f_z3|`, `+∞` when the dispersion degenerates.
///
/// # Safety
/// `spec`, `state` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_dispersion_lambda(spec: *const DfSpec, state: *const DfState, out: *mut f64) -> DfStatus {
    guard(|| {
        let (f, u) = (get(spec, "spec")?, get(state, "state")?);
        write(out, dispersion_lambda(&f.0, &u.0), "out")
    })
}

/// Relative mismatch of the order-`n` coefficient identity.
///
/// # Safety
/// `spec`, `state` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_reconstruction_error(
    spec: *const DfSpec,
    state: *const DfState,
    n: usize,
    out: *mut f64,
) -> DfStatus {
    guard(|| {
        let (f, u) = (get(spec, "spec")?, get(state, "state")?);
        write(out, reconstruction_error(&f.0, &u.0, n)?, "out")
    })
}

/// Integrates `u_t = f − ε∂x⁴u` to `t_end` with snapshots every `dt_out`.
/// A blow-up or degenerate stop is not an error; inspect
/// [`df_trajectory_termination`].
///
/// # Safety
/// `spec`, `state` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_integrate(
    spec: *const DfSpec,
    state: *const DfState,
    epsilon: f64,
    t_end: f64,
    dt_out: f64,
    rtol: f64,
    out: *mut *mut DfTrajectory,
) -> DfStatus {
    guard(|| {
        let (f, u) = (get(spec, "spec")?, get(state, "state")?);
        let cfg = SolverConfig {
            epsilon,
            t_end,
            rtol,
            output: OutputPolicy::Uniform(dt_out),
            gauge_diagnostics: false,
            ..SolverConfig::default()
        };
        put(out, DfTrajectory(integrate(&f.0, &u.0, &cfg)?), "out")
    })
}

/// # Safety
/// `traj` must be null or a live trajectory.
#[no_mangle]
pub unsafe extern "C" fn df_trajectory_free(traj: *mut DfTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of stored snapshots, including the initial one.
///
/// # Safety
/// `traj` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn df_trajectory_len(traj: *const DfTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.snapshots.len())
}

/// # Safety
/// `traj` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn df_trajectory_final_time(traj: *const DfTrajectory) -> f64 {
    traj.as_ref().map_or(f64::NAN, |t| t.0.final_time())
}

/// # Safety
/// `traj` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_trajectory_termination(traj: *const DfTrajectory, out: *mut DfTermination) -> DfStatus {
    guard(|| {
        let t = get(traj, "traj")?;
        let code = match t.0.termination {
            Termination::ReachedTEnd => DfTermination::ReachedTEnd,
            Termination::BlowupDetected => DfTermination::BlowupDetected,
            Termination::DispersionDegenerate => DfTermination::DispersionDegenerate,
            Termination::StepUnderflow => DfTermination::StepUnderflow,
        };
        write(out, code, "out")
    })
}

/// Copies snapshot `index` into a new state.
///
/// # Safety
/// `traj` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn df_trajectory_snapshot(
    traj: *const DfTrajectory,
    index: usize,
    out: *mut *mut DfState,
) -> DfStatus {
    guard(|| {
        let t = get(traj, "traj")?;
        let s = t.0.snapshots.get(index).ok_or_else(|| {
            ForgeError::Argument(format!("snapshot {index} out of range ({} stored)", t.0.snapshots.len()))
        })?;
        put(out, DfState(s.clone()), "out")
    })
}
