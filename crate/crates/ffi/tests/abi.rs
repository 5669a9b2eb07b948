use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use dspdhg_ffi::*;

fn last_error() -> String {
    let p = dspdhg_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn toy_svm() -> *mut DspdhgProblem {
    // two separable points on the line
    let features = [1.0, -1.0];
    let labels = [1.0, -1.0];
    let mut p = ptr::null_mut();
    let s = unsafe { dspdhg_problem_svm_dense(features.as_ptr(), labels.as_ptr(), 2, 1, 1.0, &mut p) };
    assert_eq!(s, DspdhgStatus::Ok);
    p
}

#[test]
fn solve_toy_svm_through_the_abi() {
    let p = toy_svm();
    unsafe {
        assert_eq!(dspdhg_problem_primal_dim(p), 2);
        assert_eq!(dspdhg_problem_dual_dim(p), 2);
        let mut opts = dspdhg_options_default();
        opts.target_relkkt = 1e-10;
        opts.max_cost = 1e5;
        opts.restart = DspdhgRestart::Adaptive;
        opts.report = DspdhgReport::Iterate;
        let mut r = ptr::null_mut();
        assert_eq!(dspdhg_solve(p, &opts, &mut r), DspdhgStatus::Ok);
        assert!(dspdhg_result_relkkt(r) <= 1e-10);
        assert!(dspdhg_result_iterations(r) > 0);

        let mut x = [0.0; 2];
        assert_eq!(dspdhg_result_primal(r, x.as_mut_ptr(), 2), DspdhgStatus::Ok);
        // max margin solution w = 1, d = 0
        assert!((x[0] - 1.0).abs() < 1e-8 && x[1].abs() < 1e-8, "{x:?}");

        let n = dspdhg_result_num_records(r);
        assert!(n >= 2);
        let mut rec = DspdhgRecord::default();
        assert_eq!(dspdhg_result_record(r, n - 1, &mut rec), DspdhgStatus::Ok);
        assert_eq!(rec.relkkt, dspdhg_result_relkkt(r));
        assert!(rec.rel_error.is_nan());
        assert_eq!(dspdhg_result_record(r, n, &mut rec), DspdhgStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));

        dspdhg_result_free(r);
        dspdhg_problem_free(p);
    }
}

#[test]
fn argument_errors_map_to_status_codes() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(dspdhg_problem_load(ptr::null(), &mut p), DspdhgStatus::NullPointer);
        assert!(last_error().contains("path"));

        let missing = CString::new("/definitely/not/here.txt").unwrap();
        assert_eq!(dspdhg_problem_load(missing.as_ptr(), &mut p), DspdhgStatus::Io);
        assert!(last_error().contains("/definitely/not/here.txt"));

        assert_eq!(dspdhg_problem_gen_mpc(2, 2, 0, 0, &mut p), DspdhgStatus::InvalidArgument);

        let labels = [3.0];
        let f = [1.0];
        assert_eq!(
            dspdhg_problem_svm_dense(f.as_ptr(), labels.as_ptr(), 1, 1, 1.0, &mut p),
            DspdhgStatus::InvalidArgument
        );

        let mut r = ptr::null_mut();
        assert_eq!(dspdhg_solve(ptr::null(), ptr::null(), &mut r), DspdhgStatus::NullPointer);

        let prob = toy_svm();
        let mut opts = dspdhg_options_default();
        opts.restart = DspdhgRestart::Fixed;
        opts.restart_k = 0;
        assert_eq!(dspdhg_solve(prob, &opts, &mut r), DspdhgStatus::Config);
        assert!(r.is_null());

        let mut x = [0.0; 3];
        opts = dspdhg_options_default();
        opts.max_cost = 5.0;
        assert_eq!(dspdhg_solve(prob, &opts, &mut r), DspdhgStatus::Ok);
        assert_eq!(dspdhg_result_primal(r, x.as_mut_ptr(), 3), DspdhgStatus::InvalidArgument);
        // a successful call clears the previous message
        assert_eq!(dspdhg_result_dual(r, x.as_mut_ptr(), 2), DspdhgStatus::Ok);
        assert!(dspdhg_last_error().is_null());
        dspdhg_result_free(r);
        dspdhg_problem_free(prob);

        dspdhg_problem_free(ptr::null_mut());
        dspdhg_result_free(ptr::null_mut());
        assert!(dspdhg_result_relkkt(ptr::null()).is_nan());
    }
}

#[test]
fn missed_target_reports_budget_exhaustion() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(dspdhg_problem_gen_mpc(3, 2, 4, 1, &mut p), DspdhgStatus::Ok);
        let mut opts = dspdhg_options_default();
        opts.p = 0.5;
        opts.q = 0.5;
        opts.max_cost = 3.0;
        opts.target_relkkt = 1e-14;
        let mut r = ptr::null_mut();
        assert_eq!(dspdhg_solve(p, &opts, &mut r), DspdhgStatus::BudgetExhausted);
        assert!(!r.is_null());
        assert!(dspdhg_result_cost_units(r) >= 3.0);
        let mut rec = DspdhgRecord::default();
        assert_eq!(dspdhg_result_record(r, 0, &mut rec), DspdhgStatus::Ok);
        assert!(rec.infeasibility >= 0.0);
        dspdhg_result_free(r);
        dspdhg_problem_free(p);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(dspdhg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_exported_symbols() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dspdhg.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in [
        "dspdhg_problem_load",
        "dspdhg_problem_libsvm",
        "dspdhg_problem_svm_dense",
        "dspdhg_problem_gen_mpc",
        "dspdhg_solve",
        "dspdhg_result_primal",
        "dspdhg_result_free",
        "dspdhg_last_error",
        "DSPDHG_STATUS_BUDGET_EXHAUSTED = 7",
        "typedef struct DspdhgProblem DspdhgProblem",
    ] {
        assert!(text.contains(sym), "header lacks {sym}");
    }

    // compile the header as C when a compiler is around
    let Ok(out) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .output()
    else {
        eprintln!("cc not found; skipping header compile");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
