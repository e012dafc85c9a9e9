//! C ABI over the gridscale core.
//!
//! Every function returns a [`GsStatus`]. On failure a description is kept in
//! a thread-local slot readable through [`gs_last_error`]. Handles are opaque
//! and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gridscale::case::{parse_case, NetworkCase};
use gridscale::dataset::DcopfSolver;
use gridscale::neural::{count_flops, total_training_flops, Surrogate};
use gridscale::powerflow::{solve_acpf, AcSetpoints, AcpfOptions, Loads};
use gridscale::scaling::{fit_power_law, Observation};
use gridscale::MlpConfig;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    IoError = 4,
    NotConverged = 5,
    Infeasible = 6,
    ModelError = 7,
    FitError = 8,
    Panic = 99,
}

/// A parsed network case.
pub struct GsCase {
    inner: NetworkCase,
}

/// A trained surrogate bundle (model plus feature and label scalers).
pub struct GsSurrogate {
    inner: Surrogate,
}

/// Fitted `m = a * x^alpha`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GsPowerLaw {
    pub a: f64,
    pub alpha: f64,
    pub r_squared: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(GsStatus, String);

impl Fail {
    fn new(status: GsStatus, msg: impl ToString) -> Self {
        Fail(status, msg.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            GsStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail::new(GsStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::new(GsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<(), Fail> {
    if expected != got {
        return Err(Fail::new(
            GsStatus::InvalidArgument,
            format!("{what}: expected length {expected}, got {got}"),
        ));
    }
    Ok(())
}

/// Message for the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next gridscale call on the same thread.
#[no_mangle]
pub extern "C" fn gs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from a gridscale function and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses MATPOWER text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_case_parse(text: *const c_char, out: *mut *mut GsCase) -> GsStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = str_arg(text, "text")?;
        let case = parse_case(text).map_err(|e| Fail::new(GsStatus::ParseError, e))?;
        *out = Box::into_raw(Box::new(GsCase { inner: case }));
        Ok(())
    })
}

/// Loads a bundled case by name (`case14`, `case30`, `case57`) or a MATPOWER file.
///
/// # Safety
/// `path_or_name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_case_load(path_or_name: *const c_char, out: *mut *mut GsCase) -> GsStatus {
    guard(|| {
        non_null(out, "out")?;
        let name = str_arg(path_or_name, "path_or_name")?;
        let case = NetworkCase::load(name).map_err(|e| match e {
            gridscale::case::CaseLoadError::Io(io) => Fail::new(GsStatus::IoError, io),
            other => Fail::new(GsStatus::ParseError, other),
        })?;
        *out = Box::into_raw(Box::new(GsCase { inner: case }));
        Ok(())
    })
}

/// Releases a case. NULL is ignored.
///
/// # Safety
/// `case` must come from `gs_case_parse`/`gs_case_load` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gs_case_free(case: *mut GsCase) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// Bus, in-service generator and branch counts. Any output may be NULL.
///
/// # Safety
/// `case` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_case_dims(
    case: *const GsCase,
    n_bus: *mut usize,
    n_gen: *mut usize,
    n_branch: *mut usize,
) -> GsStatus {
    guard(|| {
        non_null(case, "case")?;
        let c = &(*case).inner;
        if !n_bus.is_null() {
            *n_bus = c.n_bus();
        }
        if !n_gen.is_null() {
            *n_gen = c.n_active_gen();
        }
        if !n_branch.is_null() {
            *n_branch = c.n_branch();
        }
        Ok(())
    })
}

/// Canonical JSON of the case. Free the result with `gs_string_free`.
///
/// # Safety
/// `case` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_case_to_json(case: *const GsCase, out: *mut *mut c_char) -> GsStatus {
    guard(|| {
        non_null(case, "case")?;
        non_null(out, "out")?;
        let json = (*case).inner.to_json();
        *out = CString::new(json)
            .map_err(|e| Fail::new(GsStatus::InvalidArgument, e))?
            .into_raw();
        Ok(())
    })
}

/// Newton–Raphson power flow at the case's own dispatch and loads.
/// `vm` and `va` (radians) receive one entry per bus; `iterations` may be NULL.
///
/// # Safety
/// `case` must be a live handle; `vm` and `va` must hold `n_bus` doubles.
#[no_mangle]
pub unsafe extern "C" fn gs_acpf(
    case: *const GsCase,
    vm: *mut f64,
    va: *mut f64,
    n_bus: usize,
    iterations: *mut u32,
) -> GsStatus {
    guard(|| {
        non_null(case, "case")?;
        let c = &(*case).inner;
        check_len("n_bus", c.n_bus(), n_bus)?;
        let vm = slice_out(vm, n_bus, "vm")?;
        let va = slice_out(va, n_bus, "va")?;
        let sol = solve_acpf(c, &AcSetpoints::from_case(c), &Loads::from_case(c), &AcpfOptions::default())
            .map_err(|e| Fail::new(GsStatus::InvalidArgument, e))?;
        if !iterations.is_null() {
            *iterations = sol.iterations as u32;
        }
        if !sol.converged {
            return Err(Fail::new(
                GsStatus::NotConverged,
                format!("no convergence, mismatch {:e}", sol.max_mismatch),
            ));
        }
        vm.copy_from_slice(&sol.vm);
        va.copy_from_slice(&sol.va);
        Ok(())
    })
}

/// DC optimal dispatch for per-bus active loads `pd` (MW). `pg` receives MW
/// per in-service generator; `objective` ($/h) may be NULL.
///
/// # Safety
/// `case` must be a live handle; `pd` must hold `n_bus` and `pg` `n_gen` doubles.
#[no_mangle]
pub unsafe extern "C" fn gs_dcopf(
    case: *const GsCase,
    pd: *const f64,
    n_bus: usize,
    pg: *mut f64,
    n_gen: usize,
    objective: *mut f64,
) -> GsStatus {
    guard(|| {
        non_null(case, "case")?;
        let c = &(*case).inner;
        check_len("n_bus", c.n_bus(), n_bus)?;
        check_len("n_gen", c.n_active_gen(), n_gen)?;
        let pd = slice_arg(pd, n_bus, "pd")?;
        let pg = slice_out(pg, n_gen, "pg")?;
        let solver = DcopfSolver::new(c).map_err(|e| Fail::new(GsStatus::InvalidArgument, e))?;
        let out = solver.solve(pd);
        if !out.sample.feasible {
            return Err(Fail::new(GsStatus::Infeasible, "DCOPF infeasible"));
        }
        pg.copy_from_slice(&out.sample.label_pg);
        if !objective.is_null() {
            *objective = out.sample.objective;
        }
        Ok(())
    })
}

/// Loads a surrogate bundle written by `gridscale train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_surrogate_load(path: *const c_char, out: *mut *mut GsSurrogate) -> GsStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = str_arg(path, "path")?;
        let s = Surrogate::load(Path::new(path)).map_err(|e| Fail::new(GsStatus::ModelError, e))?;
        *out = Box::into_raw(Box::new(GsSurrogate { inner: s }));
        Ok(())
    })
}

/// Builds a surrogate from bundle JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_surrogate_from_json(json: *const c_char, out: *mut *mut GsSurrogate) -> GsStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = str_arg(json, "json")?;
        let s = Surrogate::from_json(text).map_err(|e| Fail::new(GsStatus::ModelError, e))?;
        *out = Box::into_raw(Box::new(GsSurrogate { inner: s }));
        Ok(())
    })
}

/// Releases a surrogate. NULL is ignored.
///
/// # Safety
/// `s` must come from a gridscale constructor and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gs_surrogate_free(s: *mut GsSurrogate) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Input and output widths of the surrogate.
///
/// # Safety
/// `s` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_surrogate_dims(s: *const GsSurrogate, input_dim: *mut usize, output_dim: *mut usize) -> GsStatus {
    guard(|| {
        non_null(s, "surrogate")?;
        let cfg = &(*s).inner.model.config;
        if !input_dim.is_null() {
            *input_dim = cfg.input_dim;
        }
        if !output_dim.is_null() {
            *output_dim = cfg.output_dim;
        }
        Ok(())
    })
}

/// Predicts `n_rows` samples. `x` is row-major `n_rows × input_dim` in raw
/// units (MW / MVAr); `y` receives `n_rows × output_dim` in MW and p.u.
///
/// # Safety
/// `s` must be a live handle; `x` and `y` must hold the stated element counts.
#[no_mangle]
pub unsafe extern "C" fn gs_surrogate_predict(
    s: *const GsSurrogate,
    x: *const f64,
    n_rows: usize,
    input_dim: usize,
    y: *mut f64,
    y_len: usize,
) -> GsStatus {
    guard(|| {
        non_null(s, "surrogate")?;
        let sur = &(*s).inner;
        let cfg = &sur.model.config;
        check_len("input_dim", cfg.input_dim, input_dim)?;
        check_len("y_len", n_rows * cfg.output_dim, y_len)?;
        if n_rows == 0 {
            return Ok(());
        }
        let x = slice_arg(x, n_rows * input_dim, "x")?;
        let y = slice_out(y, y_len, "y")?;
        let view = ndarray::ArrayView2::from_shape((n_rows, input_dim), x)
            .map_err(|e| Fail::new(GsStatus::InvalidArgument, e))?;
        let pred = sur.predict(view).map_err(|e| Fail::new(GsStatus::ModelError, e))?;
        for (dst, src) in y.iter_mut().zip(pred.iter()) {
            *dst = *src;
        }
        Ok(())
    })
}

/// Fits `m = a * x^alpha` to `n` points.
///
/// # Safety
/// `x` and `m` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_fit_power_law(x: *const f64, m: *const f64, n: usize, out: *mut GsPowerLaw) -> GsStatus {
    guard(|| {
        non_null(out, "out")?;
        let x = slice_arg(x, n, "x")?;
        let m = slice_arg(m, n, "m")?;
        let obs: Vec<Observation> = x.iter().zip(m).map(|(&x, &m)| Observation::new(x, m)).collect();
        let f = fit_power_law(&obs).map_err(|e| Fail::new(GsStatus::FitError, e))?;
        *out = GsPowerLaw {
            a: f.a,
            alpha: f.alpha,
            r_squared: f.r_squared,
        };
        Ok(())
    })
}

/// Forward FLOPs per sample of a fully connected network. `dims` lists the
/// layer widths from input to output (at least two entries).
///
/// # Safety
/// `dims` must hold `n_dims` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_count_flops(dims: *const usize, n_dims: usize, out: *mut u64) -> GsStatus {
    guard(|| {
        non_null(out, "out")?;
        let dims = slice_arg(dims, n_dims, "dims")?;
        if dims.len() < 2 {
            return Err(Fail::new(GsStatus::InvalidArgument, "need input and output widths"));
        }
        let cfg = MlpConfig::new(dims[0], &dims[1..dims.len() - 1], dims[dims.len() - 1], 0);
        cfg.validate().map_err(|e| Fail::new(GsStatus::InvalidArgument, e))?;
        *out = count_flops(&cfg);
        Ok(())
    })
}

/// Training FLOPs `3 · flops_forward · n_train · n_epochs`, as a double.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gs_training_flops(flops_forward: u64, n_train: u64, n_epochs: u64, out: *mut f64) -> GsStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = total_training_flops(flops_forward, n_train, n_epochs) as f64;
        Ok(())
    })
}
