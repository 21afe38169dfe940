//! C ABI over `tensor-bellman`.
//!
//! Objects are opaque handles created by `tb_*_new`/`tb_*_read` and released
//! with the matching `tb_*_free`. Every fallible call returns a [`TbStatus`];
//! on failure `tb_last_error_message` describes the error on the calling
//! thread. Indices are 0-based. Output buffers are caller-allocated.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use tensor_bellman::bellman::{self, IterationOptions, PolicyProblem, RowChoice};
use tensor_bellman::control::{self, Grid, Model, Param1, Param2, Scheme, SchemeOptions};
use tensor_bellman::solve::{self, SolveOptions};
use tensor_bellman::structure::{self, StrongM};
use tensor_bellman::{Error, SparseTensor};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbStatus {
    Ok = 0,
    InvalidInput = 1,
    Numerical = 4,
    NotStrongM = 5,
    NoSolution = 6,
    CheckFailed = 7,
    NullPointer = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbVerdict {
    StrongM = 0,
    NotStrongM = 1,
    Undecidable = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbMethod {
    Newton = 0,
    FixedPoint = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbScheme {
    Od = 0,
    Do = 1,
}

/// Opaque sparse tensor.
pub struct TbTensor(SparseTensor);

/// Opaque policy problem under construction.
pub struct TbProblem {
    order: usize,
    rows: Vec<Vec<RowChoice>>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TbStatus {
    match e.exit_code() {
        4 => TbStatus::Numerical,
        5 => TbStatus::NotStrongM,
        6 => TbStatus::NoSolution,
        7 => TbStatus::CheckFailed,
        _ => TbStatus::InvalidInput,
    }
}

enum Fail {
    Lib(Error),
    Null(&'static str),
    Small(usize),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> TbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TbStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(format!("{}: {e}", e.kind()));
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            TbStatus::NullPointer
        }
        Ok(Err(Fail::Small(need))) => {
            set_error(format!("output buffer too small, need {need}"));
            TbStatus::BufferTooSmall
        }
        Err(_) => {
            set_error("internal panic".into());
            TbStatus::Panic
        }
    }
}

unsafe fn input<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn put<T>(p: *mut T, v: T) {
    if !p.is_null() {
        *p = v;
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a tensor from `nnz` entries. `indices` holds `nnz * order` 0-based
/// indices, row-major by entry.
///
/// # Safety
/// `indices` and `values` must point to arrays of the stated lengths and
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_tensor_new(
    order: usize,
    dim: usize,
    nnz: usize,
    indices: *const usize,
    values: *const f64,
    out: *mut *mut TbTensor,
) -> TbStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let idx = input(indices, nnz * order, "indices")?;
        let vals = input(values, nnz, "values")?;
        let entries = (0..nnz).map(|k| (idx[k * order..(k + 1) * order].to_vec(), vals[k]));
        let t = SparseTensor::from_entries(order, dim, entries)?;
        *out = Box::into_raw(Box::new(TbTensor(t)));
        Ok(())
    })
}

/// Reads a tensor file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tb_tensor_read(path: *const c_char, out: *mut *mut TbTensor) -> TbStatus {
    guard(|| {
        if path.is_null() {
            return Err(Fail::Null("path"));
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let p = CStr::from_ptr(path).to_string_lossy().into_owned();
        let t = tensor_bellman::io::read_tensor(p)?;
        *out = Box::into_raw(Box::new(TbTensor(t)));
        Ok(())
    })
}

/// # Safety
/// `t` must come from `tb_tensor_new`/`tb_tensor_read` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tb_tensor_free(t: *mut TbTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// # Safety
/// `t` must be a valid tensor handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn tb_tensor_order(t: *const TbTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.order())
}

/// # Safety
/// `t` must be a valid tensor handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn tb_tensor_dim(t: *const TbTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.dim())
}

/// # Safety
/// `t` must be a valid tensor handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn tb_tensor_nnz(t: *const TbTensor) -> usize {
    t.as_ref().map_or(0, |t| t.0.nnz())
}

/// `out = A x^{m-1}`; both buffers have length `n = dim`.
///
/// # Safety
/// `x` and `out` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn tb_tensor_contract(t: *const TbTensor, x: *const f64, n: usize, out: *mut f64) -> TbStatus {
    guard(|| {
        let t = handle(t, "tensor")?;
        let y = t.0.contract(input(x, n, "x")?)?;
        output(out, n, "out")?.copy_from_slice(&y);
        Ok(())
    })
}

/// Strong M-tensor decision. When the verdict is not-strong-M and
/// `zero_eigvec` is non-NULL, the `dim` entries of a nonnegative `z` with
/// `A z^{m-1} = 0` are written there.
///
/// # Safety
/// `verdict` must be valid; `zero_eigvec` NULL or `n >= dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn tb_classify(
    t: *const TbTensor,
    verdict: *mut TbVerdict,
    zero_eigvec: *mut f64,
    n: usize,
) -> TbStatus {
    guard(|| {
        let t = handle(t, "tensor")?;
        if verdict.is_null() {
            return Err(Fail::Null("verdict"));
        }
        let d = structure::decide_strong_m(&t.0)?;
        *verdict = match d.verdict {
            StrongM::StrongM => TbVerdict::StrongM,
            StrongM::NotStrongM => TbVerdict::NotStrongM,
            StrongM::Undecidable => TbVerdict::Undecidable,
        };
        if let (Some(z), false) = (d.zero_eigvec, zero_eigvec.is_null()) {
            if n < z.len() {
                return Err(Fail::Small(z.len()));
            }
            output(zero_eigvec, z.len(), "zero_eigvec")?.copy_from_slice(&z);
        }
        Ok(())
    })
}

/// Positive solution of `A x^{m-1} = b` with default tolerances.
///
/// # Safety
/// `b` and `x` must point to `n` doubles; `iterations`/`residual` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn tb_solve(
    t: *const TbTensor,
    b: *const f64,
    n: usize,
    method: TbMethod,
    x: *mut f64,
    iterations: *mut usize,
    residual: *mut f64,
) -> TbStatus {
    guard(|| {
        let t = handle(t, "tensor")?;
        let b = input(b, n, "b")?;
        let opts = match method {
            TbMethod::Newton => SolveOptions::default(),
            TbMethod::FixedPoint => SolveOptions::fixed_point(),
        };
        let rep = solve::solve(&t.0, b, &opts)?;
        output(x, n, "x")?.copy_from_slice(&rep.x);
        put(iterations, rep.iterations);
        put(residual, rep.residual_inf);
        Ok(())
    })
}

/// Empty problem of the given order and number of rows.
#[no_mangle]
pub extern "C" fn tb_problem_new(order: usize, dim: usize) -> *mut TbProblem {
    if order < 2 || dim == 0 {
        set_error("order must be >= 2 and dim >= 1".into());
        return ptr::null_mut();
    }
    Box::into_raw(Box::new(TbProblem {
        order,
        rows: vec![Vec::new(); dim],
    }))
}

/// Appends a local policy to `row`. `trailing` holds `nnz * (order - 1)`
/// 0-based trailing indices; `label` may be NULL for an automatic label.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn tb_problem_add_choice(
    p: *mut TbProblem,
    row: usize,
    label: *const c_char,
    nnz: usize,
    trailing: *const usize,
    values: *const f64,
    rhs: f64,
) -> TbStatus {
    guard(|| {
        let p = p.as_mut().ok_or(Fail::Null("problem"))?;
        if row >= p.rows.len() {
            return Err(Error::IndexOutOfRange(format!("row {row} of {}", p.rows.len())).into());
        }
        let k = p.order - 1;
        let idx = input(trailing, nnz * k, "trailing")?;
        let vals = input(values, nnz, "values")?;
        let label = if label.is_null() {
            p.rows[row].len().to_string()
        } else {
            CStr::from_ptr(label).to_string_lossy().into_owned()
        };
        let entries = (0..nnz).map(|e| (idx[e * k..(e + 1) * k].to_vec(), vals[e])).collect();
        p.rows[row].push(RowChoice::new(label, entries, rhs));
        Ok(())
    })
}

/// # Safety
/// `p` must come from `tb_problem_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tb_problem_free(p: *mut TbProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Policy iteration with default options. Writes the solution and the
/// chosen choice index per row.
///
/// # Safety
/// `u` and `policy` must point to `n` elements (or `policy` NULL).
#[no_mangle]
pub unsafe extern "C" fn tb_policy_iteration(
    p: *const TbProblem,
    u: *mut f64,
    policy: *mut usize,
    n: usize,
    outer_iterations: *mut usize,
    residual: *mut f64,
) -> TbStatus {
    guard(|| {
        let p = handle(p, "problem")?;
        let problem = PolicyProblem::new(p.order, p.rows.clone())?;
        let rep = bellman::policy_iteration(&problem, &IterationOptions::default())?;
        if n < rep.u.len() {
            return Err(Fail::Small(rep.u.len()));
        }
        output(u, rep.u.len(), "u")?.copy_from_slice(&rep.u);
        if !policy.is_null() {
            output(policy, rep.u.len(), "policy")?.copy_from_slice(&rep.final_policy.0);
        }
        put(outer_iterations, rep.outer_iterations);
        put(residual, rep.residual_inf);
        Ok(())
    })
}

/// Solves a control scheme with a built-in coefficient set (`param` 1 or 2)
/// on `M` intervals; `u` receives `M + 1` values. DO uses `K = M / 32` and
/// `γ_max = 2`.
///
/// # Safety
/// `u` must point to `n >= m + 1` doubles; `outer_iterations` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn tb_control_solve(
    scheme: TbScheme,
    param: u32,
    m: usize,
    u: *mut f64,
    n: usize,
    outer_iterations: *mut usize,
) -> TbStatus {
    guard(|| {
        let model: &dyn Model = match param {
            1 => &Param1,
            2 => &Param2,
            _ => return Err(Error::InvalidArgument(format!("param must be 1 or 2, got {param}")).into()),
        };
        let grid = Grid::new(m)?;
        if n < grid.nodes() {
            return Err(Fail::Small(grid.nodes()));
        }
        let scheme = match scheme {
            TbScheme::Od => Scheme::Od,
            TbScheme::Do => Scheme::Do,
        };
        let sp = control::assemble(model, &grid, scheme, &SchemeOptions::default())?;
        let sol = control::solve_scheme(model, &sp, &IterationOptions::default())?;
        output(u, grid.nodes(), "u")?.copy_from_slice(&sol.u);
        put(outer_iterations, sol.report.outer_iterations);
        Ok(())
    })
}
