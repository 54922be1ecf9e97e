//! C interface to the splitmono solvers.
//!
//! Every function returns an [`SmStatus`]; on failure the message is kept per
//! thread and can be copied out with [`sm_last_error`]. Handles are opaque and
//! owned by the caller, who releases them with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use splitmono::applications::{
    gen_entropy_ls, gen_lin_ineq_qp, solve_nlp, solve_nlp_condat_vu, solve_nlp_tseng, NlpProblem,
};
use splitmono::cli::{parse_config, run_experiment, RunOptions};
use splitmono::fbhf::{chi, fbhf_delta_step, tseng_delta_step, LineSearch, SolveConfig, SolveReport, StepPolicy, Termination};
use splitmono::operators::Modulus;
use splitmono::Error;

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Condition = 4,
    Config = 5,
    LineSearch = 6,
    NonFinite = 7,
    Numerical = 8,
    BufferTooSmall = 9,
    Panic = 10,
    /// An experiment ran but some rows ended in error.
    CellErrors = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmSolver {
    Fbhf = 0,
    Tseng = 1,
    FbhfLineSearch = 2,
    TsengLineSearch = 3,
    CondatVu = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmTermination {
    Tolerance = 0,
    MaxIterations = 1,
    Error = 2,
}

/// Solver settings. Start from [`sm_solve_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SmSolveOptions {
    pub max_iterations: u64,
    pub tolerance: f64,
    /// Step fraction for the constant-step solvers.
    pub delta: f64,
    pub ls_epsilon: f64,
    pub ls_sigma: f64,
    pub ls_theta: f64,
    pub ls_max_backtracks: u64,
    /// Dual step scale for Condat-Vu.
    pub sigma_bar: f64,
    /// Nonzero skips step-size admissibility checks.
    pub unsafe_stepsize: u8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SmCounters {
    pub resolvent: u64,
    pub b1: u64,
    pub b2: u64,
    pub projections: u64,
    pub backtracks: u64,
}

/// A generated constrained problem.
pub struct SmProblem {
    inner: NlpProblem,
}

/// The outcome of one solve.
pub struct SmReport {
    report: SolveReport,
    x: Vec<f64>,
    objective: f64,
    max_constraint: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(err: &Error) -> SmStatus {
    match err {
        Error::InvalidArgument(_) => SmStatus::InvalidArgument,
        Error::Dimension(_) => SmStatus::Dimension,
        Error::Condition(_) => SmStatus::Condition,
        Error::Config(_) => SmStatus::Config,
        Error::LineSearch { .. } => SmStatus::LineSearch,
        Error::NonFinite(_) => SmStatus::NonFinite,
        _ => SmStatus::Numerical,
    }
}

/// Runs `f`, records any error or panic, and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), (SmStatus, String)>) -> SmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SmStatus::Ok
        }
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SmStatus::Panic
        }
    }
}

fn lift(err: Error) -> (SmStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (SmStatus, String) {
    (SmStatus::NullPointer, format!("{what} is null"))
}

fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SmStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: the caller passes a NUL-terminated string that outlives this call.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| (SmStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`) and returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sm_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Largest admissible forward-backward-half-forward step for cocoercivity
/// modulus `beta` (infinite when `beta <= 0`) and Lipschitz constant `lipschitz`.
///
/// # Safety
/// `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sm_chi(beta: f64, lipschitz: f64, out: *mut f64) -> SmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = if beta > 0.0 { Modulus::finite(beta).map_err(lift)? } else { Modulus::Infinite };
        *out = chi(m, lipschitz).map_err(lift)?;
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn sm_solve_options_default() -> SmSolveOptions {
    let ls = LineSearch::default();
    let cfg = SolveConfig::default();
    SmSolveOptions {
        max_iterations: cfg.max_iterations as u64,
        tolerance: cfg.tolerance,
        delta: 3.99,
        ls_epsilon: ls.epsilon,
        ls_sigma: ls.sigma,
        ls_theta: ls.theta,
        ls_max_backtracks: ls.max_backtracks as u64,
        sigma_bar: 1.0,
        unsafe_stepsize: 0,
    }
}

unsafe fn emit_problem(r: splitmono::Result<NlpProblem>, out: *mut *mut SmProblem) -> Result<(), (SmStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    let inner = r.map_err(lift)?;
    *out = Box::into_raw(Box::new(SmProblem { inner }));
    Ok(())
}

/// Box-constrained least squares with `p` random affine inequalities in
/// dimension `n`.
///
/// # Safety
/// `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sm_problem_lin_ineq(n: usize, p: usize, seed: u64, out: *mut *mut SmProblem) -> SmStatus {
    guard(|| emit_problem(gen_lin_ineq_qp(n, p, seed), out))
}

/// Box-constrained least squares with the negative-entropy constraint
/// `sum x log x <= r_fraction * n`.
///
/// # Safety
/// `out` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sm_problem_entropy(n: usize, r_fraction: f64, seed: u64, out: *mut *mut SmProblem) -> SmStatus {
    guard(|| emit_problem(gen_entropy_ls(n, r_fraction, seed), out))
}

/// Primal dimension, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_problem_dim(p: *const SmProblem) -> usize {
    p.as_ref().map_or(0, |p| p.inner.dim())
}

/// Number of inequality constraints, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_problem_num_constraints(p: *const SmProblem) -> usize {
    p.as_ref().map_or(0, |p| p.inner.num_constraints())
}

/// # Safety
/// `p` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sm_problem_free(p: *mut SmProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn solve(p: &NlpProblem, solver: SmSolver, o: &SmSolveOptions) -> splitmono::Result<SolveReport> {
    let cfg = SolveConfig {
        max_iterations: usize::try_from(o.max_iterations).unwrap_or(usize::MAX),
        tolerance: o.tolerance,
        initial: Some(p.start()),
        unchecked_stepsize: o.unsafe_stepsize != 0,
        ..Default::default()
    };
    let ls = LineSearch {
        epsilon: o.ls_epsilon,
        sigma: o.ls_sigma,
        theta: o.ls_theta,
        max_backtracks: usize::try_from(o.ls_max_backtracks).unwrap_or(usize::MAX),
        initial: None,
    };
    let lipschitz = || {
        p.lipschitz()?.ok_or_else(|| Error::Config("constant steps need affine constraints; use a line search".into()))
    };
    match solver {
        SmSolver::Fbhf => solve_nlp(p, &StepPolicy::Constant(fbhf_delta_step(p.beta(), lipschitz()?, o.delta)?), &cfg),
        SmSolver::Tseng => solve_nlp_tseng(p, &StepPolicy::Constant(tseng_delta_step(p.beta(), lipschitz()?, o.delta)?), &cfg),
        SmSolver::FbhfLineSearch => solve_nlp(p, &StepPolicy::LineSearch(ls), &cfg),
        SmSolver::TsengLineSearch => solve_nlp_tseng(p, &StepPolicy::LineSearch(ls), &cfg),
        SmSolver::CondatVu => solve_nlp_condat_vu(p, o.sigma_bar, &cfg),
    }
}

/// Solves `problem` and stores the outcome in `*out`. A run that stops
/// because of a numerical failure mid-way still yields a report whose
/// termination is `Error`; invalid settings return a nonzero status instead.
///
/// # Safety
/// `problem` must be a live handle, `options` null or valid, `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sm_problem_solve(
    problem: *const SmProblem,
    solver: SmSolver,
    options: *const SmSolveOptions,
    out: *mut *mut SmReport,
) -> SmStatus {
    guard(|| {
        let p = &problem.as_ref().ok_or_else(|| null("problem"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let o = options.as_ref().copied().unwrap_or_else(|| sm_solve_options_default());
        let report = solve(p, solver, &o).map_err(lift)?;
        let x = p.split(&report.z).0;
        let objective = p.objective(&x);
        let max_constraint = p.max_constraint(&x).map_err(lift)?;
        *out = Box::into_raw(Box::new(SmReport { x: x.iter().copied().collect(), report, objective, max_constraint }));
        Ok(())
    })
}

/// # Safety
/// `r` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_report_iterations(r: *const SmReport) -> u64 {
    r.as_ref().map_or(0, |r| r.report.iterations as u64)
}

/// # Safety
/// `r` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_report_termination(r: *const SmReport) -> SmTermination {
    match r.as_ref().map(|r| &r.report.termination) {
        Some(Termination::Tolerance) => SmTermination::Tolerance,
        Some(Termination::MaxIterations) => SmTermination::MaxIterations,
        _ => SmTermination::Error,
    }
}

/// Objective at the primal part of the final iterate (NaN for a null handle).
///
/// # Safety
/// `r` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_report_objective(r: *const SmReport) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.objective)
}

/// Largest constraint value at the final primal iterate.
///
/// # Safety
/// `r` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sm_report_max_constraint(r: *const SmReport) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.max_constraint)
}

/// # Safety
/// `r` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sm_report_counters(r: *const SmReport, out: *mut SmCounters) -> SmStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("report"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let c = r.report.counters;
        *out = SmCounters { resolvent: c.resolvent, b1: c.b1, b2: c.b2, projections: c.projections, backtracks: c.backtracks };
        Ok(())
    })
}

/// Copies the primal solution into `buf`. `*needed` receives its length
/// either way; a short buffer yields `BufferTooSmall` and nothing is copied.
///
/// # Safety
/// `buf` must point to `len` writable doubles (or be null with `len == 0`);
/// `needed` must be null or valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sm_report_solution(r: *const SmReport, buf: *mut f64, len: usize, needed: *mut usize) -> SmStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("report"))?;
        if let Some(n) = needed.as_mut() {
            *n = r.x.len();
        }
        if len < r.x.len() {
            return Err((SmStatus::BufferTooSmall, format!("buffer holds {len} values, solution has {}", r.x.len())));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        std::ptr::copy_nonoverlapping(r.x.as_ptr(), buf, r.x.len());
        Ok(())
    })
}

/// # Safety
/// `r` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sm_report_free(r: *mut SmReport) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Runs an experiment described by configuration text and writes
/// `report.csv` and `summary.md` under `out_dir`. `*failed_rows` (optional)
/// receives the number of rows that ended in error; when it is nonzero the
/// status is `CellErrors`.
///
/// # Safety
/// `config` and `out_dir` must be NUL-terminated strings; `failed_rows` null or valid.
#[no_mangle]
pub unsafe extern "C" fn sm_run_experiment(
    config: *const c_char,
    out_dir: *const c_char,
    threads: usize,
    unsafe_stepsize: u8,
    failed_rows: *mut usize,
) -> SmStatus {
    guard(|| {
        let text = c_str(config, "config")?;
        let dir = c_str(out_dir, "out_dir")?;
        let cfg = parse_config(text).map_err(lift)?;
        let opts = RunOptions {
            out_dir: PathBuf::from(dir),
            threads: threads.max(1),
            seeds: None,
            unsafe_stepsize: unsafe_stepsize != 0,
        };
        let outcome = run_experiment(&cfg, &opts).map_err(lift)?;
        if let Some(f) = failed_rows.as_mut() {
            *f = outcome.errors;
        }
        if outcome.errors > 0 {
            return Err((SmStatus::CellErrors, format!("{} of {} rows ended in error", outcome.errors, outcome.rows.len())));
        }
        Ok(())
    })
}
