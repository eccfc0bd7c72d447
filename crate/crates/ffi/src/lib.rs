//! C ABI over the `fracspec` core.
//!
//! Every entry point returns an [`FsStatus`]; on failure the message is kept
//! per thread and read back with [`fs_last_error_message`]. Problems are
//! opaque heap handles released with [`fs_problem_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fracspec::checks::{picone_term, PiconePair};
use fracspec::eigen::{dense_p2_oracle, solve_first_eigenpair, EigenPair, SolverConfig};
use fracspec::grid::{FracParams, Grid, ScalarField};
use fracspec::kernel::{assemble, KernelAssembly, KernelMode};
use fracspec::optimizer::{
    maximize_over_ball, minimize_over_set, AdmissibleSet, OptResult, OuterConfig, PotentialProblem,
};
use fracspec::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsStatus {
    Ok = 0,
    InvalidParameter = 1,
    InvalidGrid = 2,
    DegenerateInput = 3,
    InvalidInput = 4,
    Unsupported = 5,
    NumericalFailure = 6,
    NullPointer = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsKernelMode {
    Midpoint = 0,
    ExactCellPair = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FsDirection {
    Min = 0,
    Max = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsSolverConfig {
    pub tol_res: f64,
    pub tol_lambda: f64,
    pub max_iters: usize,
    pub step0: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsOuterConfig {
    pub tol_lambda: f64,
    pub tol_v: f64,
    pub tol_fp: f64,
    pub max_iters: usize,
    /// Nonpositive selects the automatic initial ascent step.
    pub ascent_step0: f64,
    pub tol_mono: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FsEigenResult {
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FsOptResult {
    pub lambda: f64,
    pub optimality_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Opaque assembled problem: grid, exponents and kernel.
pub struct FsProblem {
    kernel: KernelAssembly,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> FsStatus {
    match e {
        Error::InvalidParameter { .. } => FsStatus::InvalidParameter,
        Error::InvalidGrid(_) => FsStatus::InvalidGrid,
        Error::DegenerateInput(_) => FsStatus::DegenerateInput,
        Error::InvalidInput(_) => FsStatus::InvalidInput,
        Error::UnsupportedMode(_) | Error::Unsupported(_) => FsStatus::Unsupported,
        Error::NumericalFailure(_) => FsStatus::NumericalFailure,
    }
}

enum Fail {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            FsStatus::Ok
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(name))) => {
            set_error(&format!("null pointer passed for `{name}`"));
            FsStatus::NullPointer
        }
        Err(_) => {
            set_error("internal panic");
            FsStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &'static str) -> Result<*const T, Fail> {
    if p.is_null() {
        Err(Fail::Null(name))
    } else {
        Ok(p)
    }
}

impl From<FsSolverConfig> for SolverConfig {
    fn from(c: FsSolverConfig) -> Self {
        SolverConfig {
            tol_res: c.tol_res,
            tol_lambda: c.tol_lambda,
            max_iters: c.max_iters,
            step0: c.step0,
            armijo_c: c.armijo_c,
            backtrack: c.backtrack,
            seed: c.seed,
        }
    }
}

impl From<FsOuterConfig> for OuterConfig {
    fn from(c: FsOuterConfig) -> Self {
        OuterConfig {
            tol_lambda: c.tol_lambda,
            tol_v: c.tol_v,
            tol_fp: c.tol_fp,
            max_iters: c.max_iters,
            ascent_step0: (c.ascent_step0 > 0.0).then_some(c.ascent_step0),
            tol_mono: c.tol_mono,
        }
    }
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn fs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn fs_solver_config_default() -> FsSolverConfig {
    let d = SolverConfig::default();
    FsSolverConfig {
        tol_res: d.tol_res,
        tol_lambda: d.tol_lambda,
        max_iters: d.max_iters,
        step0: d.step0,
        armijo_c: d.armijo_c,
        backtrack: d.backtrack,
        seed: d.seed,
    }
}

#[no_mangle]
pub extern "C" fn fs_outer_config_default() -> FsOuterConfig {
    let d = OuterConfig::default();
    FsOuterConfig {
        tol_lambda: d.tol_lambda,
        tol_v: d.tol_v,
        tol_fp: d.tol_fp,
        max_iters: d.max_iters,
        ascent_step0: d.ascent_step0.unwrap_or(0.0),
        tol_mono: d.tol_mono,
    }
}

/// Assembles the kernel for `N` cells on `(a, b)`.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn fs_problem_new(
    a: f64,
    b: f64,
    n: usize,
    s: f64,
    p: f64,
    q: f64,
    mode: FsKernelMode,
    out: *mut *mut FsProblem,
) -> FsStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let params = FracParams::new(s, p, q)?;
        let grid = Grid::new(a, b, n)?;
        let mode = match mode {
            FsKernelMode::Midpoint => KernelMode::Midpoint,
            FsKernelMode::ExactCellPair => KernelMode::ExactCellPair,
        };
        let kernel = assemble(&params, &grid, mode)?;
        *out = Box::into_raw(Box::new(FsProblem { kernel }));
        Ok(())
    })
}

/// # Safety
/// `problem` must come from `fs_problem_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fs_problem_free(problem: *mut FsProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Number of cells, 0 for a null handle.
///
/// # Safety
/// `problem` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fs_problem_len(problem: *const FsProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.kernel.len())
}

unsafe fn field_in(
    grid: Grid,
    data: *const f64,
    len: usize,
    name: &'static str,
) -> Result<ScalarField, Fail> {
    if data.is_null() {
        return Ok(ScalarField::zeros(grid));
    }
    if len != grid.len() {
        return Err(
            Error::InvalidInput(format!("`{name}` has {len} values, N = {}", grid.len())).into(),
        );
    }
    Ok(ScalarField::new(
        grid,
        std::slice::from_raw_parts(data, len).to_vec(),
    )?)
}

unsafe fn field_out(field: &ScalarField, data: *mut f64) {
    if !data.is_null() {
        ptr::copy_nonoverlapping(field.values().as_ptr(), data, field.len());
    }
}

unsafe fn eigen_out(pair: &EigenPair, u_out: *mut f64, result: *mut FsEigenResult) {
    field_out(&pair.u, u_out);
    if let Some(r) = result.as_mut() {
        *r = FsEigenResult {
            lambda: pair.lambda,
            residual: pair.residual,
            iterations: pair.iterations,
            converged: pair.converged,
        };
    }
}

unsafe fn opt_out(res: &OptResult, v_out: *mut f64, u_out: *mut f64, result: *mut FsOptResult) {
    field_out(&res.v_opt, v_out);
    field_out(&res.pair.u, u_out);
    if let Some(r) = result.as_mut() {
        *r = FsOptResult {
            lambda: res.pair.lambda,
            optimality_residual: res.optimality_residual,
            iterations: res.iterations(),
            converged: res.converged(),
        };
    }
}

/// First eigenpair at `potential` (null means `V = 0`). `u_out`, if not
/// null, receives `N` values.
///
/// # Safety
/// Non-null pointers must reference `potential_len` readable / `N` writable
/// doubles and one writable result.
#[no_mangle]
pub unsafe extern "C" fn fs_solve_eigen(
    problem: *const FsProblem,
    cfg: *const FsSolverConfig,
    potential: *const f64,
    potential_len: usize,
    u_out: *mut f64,
    result: *mut FsEigenResult,
) -> FsStatus {
    guard(|| {
        let pr = &*non_null(problem, "problem")?;
        let cfg: SolverConfig = (*non_null(cfg, "cfg")?).into();
        let v = field_in(*pr.kernel.grid(), potential, potential_len, "potential")?;
        let ctx = fracspec::energy::EnergyContext::new(&pr.kernel, v)?;
        let pair = solve_first_eigenpair(&ctx, &cfg)?;
        eigen_out(&pair, u_out, result);
        Ok(())
    })
}

/// Dense `p = 2` reference eigenpair.
///
/// # Safety
/// As for `fs_solve_eigen`; `lambda_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fs_dense_oracle(
    problem: *const FsProblem,
    potential: *const f64,
    potential_len: usize,
    u_out: *mut f64,
    lambda_out: *mut f64,
) -> FsStatus {
    guard(|| {
        let pr = &*non_null(problem, "problem")?;
        non_null(lambda_out, "lambda_out")?;
        let v = field_in(*pr.kernel.grid(), potential, potential_len, "potential")?;
        let ctx = fracspec::energy::EnergyContext::new(&pr.kernel, v)?;
        let (lambda, u) = dense_p2_oracle(&ctx)?;
        field_out(&u, u_out);
        *lambda_out = lambda;
        Ok(())
    })
}

/// Minimizes or maximizes `λ` over `‖V‖_q <= radius`. `init` may be null.
///
/// # Safety
/// Non-null arrays hold `N` doubles; configs and `result` are valid.
#[no_mangle]
pub unsafe extern "C" fn fs_optimize_ball(
    problem: *const FsProblem,
    cfg: *const FsSolverConfig,
    outer: *const FsOuterConfig,
    direction: FsDirection,
    q: f64,
    radius: f64,
    init: *const f64,
    init_len: usize,
    v_out: *mut f64,
    u_out: *mut f64,
    result: *mut FsOptResult,
) -> FsStatus {
    guard(|| {
        let pr = &*non_null(problem, "problem")?;
        let cfg: SolverConfig = (*non_null(cfg, "cfg")?).into();
        let outer: OuterConfig = (*non_null(outer, "outer")?).into();
        let grid = *pr.kernel.grid();
        let init = if init.is_null() {
            None
        } else {
            Some(field_in(grid, init, init_len, "init")?)
        };
        let problem = PotentialProblem::new(&pr.kernel, cfg);
        let res = match direction {
            FsDirection::Max => maximize_over_ball(&problem, q, radius, &outer, init.as_ref())?,
            FsDirection::Min => {
                let set = AdmissibleSet::Ball { q, radius };
                let init = init
                    .map(|v| fracspec::optimizer::project_onto_ball(&v, q, radius))
                    .transpose()?;
                minimize_over_set(&problem, &set, &outer, init.as_ref())?
            }
        };
        opt_out(&res, v_out, u_out, result);
        Ok(())
    })
}

/// Minimizes `λ` over the permutations of `v0`.
///
/// # Safety
/// `v0` holds `v0_len` doubles; outputs as for `fs_optimize_ball`.
#[no_mangle]
pub unsafe extern "C" fn fs_minimize_rearrangement(
    problem: *const FsProblem,
    cfg: *const FsSolverConfig,
    outer: *const FsOuterConfig,
    v0: *const f64,
    v0_len: usize,
    v_out: *mut f64,
    u_out: *mut f64,
    result: *mut FsOptResult,
) -> FsStatus {
    guard(|| {
        let pr = &*non_null(problem, "problem")?;
        let cfg: SolverConfig = (*non_null(cfg, "cfg")?).into();
        let outer: OuterConfig = (*non_null(outer, "outer")?).into();
        non_null(v0, "v0")?;
        let v0 = field_in(*pr.kernel.grid(), v0, v0_len, "v0")?;
        let problem = PotentialProblem::new(&pr.kernel, cfg);
        let res = minimize_over_set(&problem, &AdmissibleSet::Rearrangement { v0 }, &outer, None)?;
        opt_out(&res, v_out, u_out, result);
        Ok(())
    })
}

/// Picone term for cells `i`, `j` (0-based) of `u >= 0`, `v > 0`.
///
/// # Safety
/// `u` and `v` hold `len` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn fs_picone_term(
    u: *const f64,
    v: *const f64,
    len: usize,
    i: usize,
    j: usize,
    p: f64,
    out: *mut f64,
) -> FsStatus {
    guard(|| {
        non_null(u, "u")?;
        non_null(v, "v")?;
        non_null(out, "out")?;
        let grid = Grid::new(0.0, 1.0, len)?;
        let pair = PiconePair::new(field_in(grid, u, len, "u")?, field_in(grid, v, len, "v")?)?;
        *out = picone_term(&pair, i, j, p)?;
        Ok(())
    })
}
