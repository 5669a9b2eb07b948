//! C ABI for the dspdhg solver.
//!
//! Problems and results are opaque heap handles released with their `_free`
//! function. Every fallible call returns a [`DspdhgStatus`]; on failure the
//! message is available from [`dspdhg_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dspdhg::formats::load_problem;
use dspdhg::instances::{build_svm, gen_mpc, load_libsvm, LibsvmDataset, MpcSpec};
use dspdhg::solver::{run, IterationRecord, ReportPoint, RunStatus};
use dspdhg::{Error, RestartPolicy, RunOptions, SaddleProblem, StepMode, Trajectory};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DspdhgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Parse = 4,
    Io = 5,
    Numerical = 6,
    /// The run ended on its budget before reaching `target_relkkt`; the
    /// result handle is still written.
    BudgetExhausted = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DspdhgRestart {
    None = 0,
    Adaptive = 1,
    Fixed = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DspdhgReport {
    Average = 0,
    Iterate = 1,
}

/// Run settings. Start from [`dspdhg_options_default`] and override fields.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct DspdhgOptions {
    pub p: f64,
    pub q: f64,
    /// nonzero selects certified step sizes
    pub certified: i32,
    pub seed: u64,
    pub max_cost: f64,
    /// 0 means no iteration cap
    pub max_iterations: u64,
    /// values <= 0 disable the target
    pub target_relkkt: f64,
    pub log_every: f64,
    pub restart: DspdhgRestart,
    /// epoch length for `DSPDHG_RESTART_FIXED`
    pub restart_k: u64,
    /// trigger factor for `DSPDHG_RESTART_ADAPTIVE`
    pub restart_factor: f64,
    pub report: DspdhgReport,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DspdhgRecord {
    pub cost_units: f64,
    pub iteration: u64,
    pub epoch: u64,
    pub relkkt: f64,
    /// NaN when not available
    pub rel_error: f64,
    /// NaN when not available
    pub infeasibility: f64,
    pub wall_seconds: f64,
    pub restart_flag: i32,
}

pub struct DspdhgProblem {
    inner: SaddleProblem,
}

pub struct DspdhgResult {
    inner: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> DspdhgStatus {
    match e {
        Error::DimensionMismatch { .. }
        | Error::BlockOutOfRange { .. }
        | Error::InvalidPartition(_)
        | Error::InvalidArgument(_) => DspdhgStatus::InvalidArgument,
        Error::Parse { .. } | Error::Csv(_) => DspdhgStatus::Parse,
        Error::Numerical(_) => DspdhgStatus::Numerical,
        Error::Config(_) => DspdhgStatus::Config,
        Error::Io(_) | Error::File { .. } => DspdhgStatus::Io,
    }
}

/// Runs `f`, turning errors and panics into a status plus a last-error message.
fn guard(f: impl FnOnce() -> Result<DspdhgStatus, (DspdhgStatus, String)>) -> DspdhgStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DspdhgStatus::Panic
        }
    }
}

fn fail(e: Error) -> (DspdhgStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DspdhgStatus, String) {
    (DspdhgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, (DspdhgStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map_err(|_| (DspdhgStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn emit_problem(
    out: *mut *mut DspdhgProblem,
    p: Result<SaddleProblem, Error>,
) -> Result<DspdhgStatus, (DspdhgStatus, String)> {
    let p = p.map_err(fail)?;
    *out = Box::into_raw(Box::new(DspdhgProblem { inner: p }));
    Ok(DspdhgStatus::Ok)
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn dspdhg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dspdhg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn dspdhg_options_default() -> DspdhgOptions {
    let d = RunOptions::default();
    DspdhgOptions {
        p: d.p,
        q: d.q,
        certified: 0,
        seed: d.seed,
        max_cost: d.max_cost,
        max_iterations: 0,
        target_relkkt: 0.0,
        log_every: d.log_every,
        restart: DspdhgRestart::None,
        restart_k: 0,
        restart_factor: dspdhg::restart::DEFAULT_RESTART_FACTOR,
        report: DspdhgReport::Average,
    }
}

/// Loads a problem in the dspdhg text format.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_problem_load(
    path: *const c_char,
    out: *mut *mut DspdhgProblem,
) -> DspdhgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        emit_problem(out, load_problem(path))
    })
}

/// Builds the soft-margin SVM saddle problem from a LIBSVM file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_problem_libsvm(
    path: *const c_char,
    c: f64,
    out: *mut *mut DspdhgProblem,
) -> DspdhgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        emit_problem(out, load_libsvm(path).and_then(|d| build_svm(&d, c)))
    })
}

/// Builds the SVM problem from a dense row-major `n x m` feature matrix and
/// `n` labels in {-1, +1}.
///
/// # Safety
/// `features` must hold `n * m` doubles, `labels` `n` doubles, and `out`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_problem_svm_dense(
    features: *const f64,
    labels: *const f64,
    n: usize,
    m: usize,
    c: f64,
    out: *mut *mut DspdhgProblem,
) -> DspdhgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n > 0 && (labels.is_null() || (m > 0 && features.is_null())) {
            return Err(null("features or labels"));
        }
        let labels = if n == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(labels, n).to_vec()
        };
        let samples = (0..n)
            .map(|i| {
                (0..m)
                    .filter_map(|j| {
                        let v = *features.add(i * m + j);
                        (v != 0.0).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        let data = LibsvmDataset {
            samples,
            labels,
            dim: m,
        };
        emit_problem(out, build_svm(&data, c))
    })
}

/// Generates a synthetic MPC instance.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_problem_gen_mpc(
    nx: usize,
    nu: usize,
    horizon: usize,
    seed: u64,
    out: *mut *mut DspdhgProblem,
) -> DspdhgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        emit_problem(
            out,
            gen_mpc(MpcSpec {
                nx,
                nu,
                horizon,
                seed,
            }),
        )
    })
}

/// # Safety
/// `problem` must come from a `dspdhg_problem_*` constructor and not be freed.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_problem_primal_dim(problem: *const DspdhgProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.primal_dim())
}

/// # Safety
/// As [`dspdhg_problem_primal_dim`].
#[no_mangle]
pub unsafe extern "C" fn dspdhg_problem_dual_dim(problem: *const DspdhgProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.inner.dual_dim())
}

/// # Safety
/// `problem` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_problem_free(problem: *mut DspdhgProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

fn to_options(o: &DspdhgOptions) -> Result<RunOptions, (DspdhgStatus, String)> {
    let restart = match o.restart {
        DspdhgRestart::None => RestartPolicy::None,
        DspdhgRestart::Adaptive => RestartPolicy::AdaptiveKkt {
            factor: o.restart_factor,
        },
        DspdhgRestart::Fixed => RestartPolicy::FixedK(o.restart_k),
    };
    restart.validate().map_err(fail)?;
    Ok(RunOptions {
        p: o.p,
        q: o.q,
        step_mode: if o.certified != 0 {
            StepMode::Certified
        } else {
            StepMode::Practical
        },
        seed: o.seed,
        max_cost: o.max_cost,
        max_iterations: (o.max_iterations > 0).then_some(o.max_iterations),
        target_relkkt: (o.target_relkkt > 0.0).then_some(o.target_relkkt),
        log_every: o.log_every,
        restart,
        report: match o.report {
            DspdhgReport::Average => ReportPoint::Average,
            DspdhgReport::Iterate => ReportPoint::Iterate,
        },
        ..RunOptions::default()
    })
}

/// Runs the solver. With a target set and not reached, returns
/// `DSPDHG_STATUS_BUDGET_EXHAUSTED` and still writes `*out`.
///
/// # Safety
/// `problem` must be a live handle, `options` null (defaults) or valid, and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_solve(
    problem: *const DspdhgProblem,
    options: *const DspdhgOptions,
    out: *mut *mut DspdhgResult,
) -> DspdhgStatus {
    guard(|| {
        let problem = problem.as_ref().ok_or_else(|| null("problem"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let opts = options.as_ref().copied().unwrap_or_else(|| dspdhg_options_default());
        let run_opts = to_options(&opts)?;
        let t = run(&problem.inner, &run_opts).map_err(fail)?;
        let missed = run_opts.target_relkkt.is_some() && t.status != RunStatus::ReachedTarget;
        *out = Box::into_raw(Box::new(DspdhgResult { inner: t }));
        if missed {
            set_error("budget exhausted before reaching the relKKT target");
            Ok(DspdhgStatus::BudgetExhausted)
        } else {
            Ok(DspdhgStatus::Ok)
        }
    })
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_result_relkkt(result: *const DspdhgResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.final_relkkt())
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_result_cost_units(result: *const DspdhgResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.cost_units)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_result_iterations(result: *const DspdhgResult) -> u64 {
    result.as_ref().map_or(0, |r| r.inner.iterations)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_result_restarts(result: *const DspdhgResult) -> u64 {
    result.as_ref().map_or(0, |r| r.inner.restarts)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_result_num_records(result: *const DspdhgResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.records.len())
}

fn record(r: &IterationRecord) -> DspdhgRecord {
    DspdhgRecord {
        cost_units: r.cost_units,
        iteration: r.iteration,
        epoch: r.epoch,
        relkkt: r.relkkt,
        rel_error: r.rel_error.unwrap_or(f64::NAN),
        infeasibility: r.infeasibility.unwrap_or(f64::NAN),
        wall_seconds: r.wall_seconds,
        restart_flag: r.restart_flag as i32,
    }
}

/// Copies log row `index` into `*out`.
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_result_record(
    result: *const DspdhgResult,
    index: usize,
    out: *mut DspdhgRecord,
) -> DspdhgStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let rec = r.inner.records.get(index).ok_or_else(|| {
            (
                DspdhgStatus::InvalidArgument,
                format!("record {index} out of range ({} rows)", r.inner.records.len()),
            )
        })?;
        *out = record(rec);
        Ok(DspdhgStatus::Ok)
    })
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: usize) -> Result<DspdhgStatus, (DspdhgStatus, String)> {
    if len != src.len() {
        return Err((
            DspdhgStatus::InvalidArgument,
            format!("buffer length {len} != vector length {}", src.len()),
        ));
    }
    if len > 0 {
        if buf.is_null() {
            return Err(null("buffer"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, len);
    }
    Ok(DspdhgStatus::Ok)
}

/// Copies the reported primal point (the point of the last log row); `len`
/// must equal the primal dimension.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_result_primal(
    result: *const DspdhgResult,
    buf: *mut f64,
    len: usize,
) -> DspdhgStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        copy_out(&r.inner.final_point.x, buf, len)
    })
}

/// Copies the reported dual point; `len` must equal the dual dimension.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_result_dual(
    result: *const DspdhgResult,
    buf: *mut f64,
    len: usize,
) -> DspdhgStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        copy_out(&r.inner.final_point.y, buf, len)
    })
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dspdhg_result_free(result: *mut DspdhgResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
