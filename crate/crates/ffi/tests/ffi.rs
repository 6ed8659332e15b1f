use std::ffi::c_void;
use std::path::{Path, PathBuf};
use std::process::Command;

use syncrate::learn::{expected_bound, homogeneous_policy};
use syncrate::mck::{build_mck_instance, decode_policy, solve_exact_dp};
use syncrate::syncmodel::consistency_level;
use syncrate::SystemModel;
use syncrate_ffi::*;

fn new_model(rates: &[f64], budget: u64) -> *mut SrModel {
    let mut m = std::ptr::null_mut();
    let st = unsafe { sr_model_new(rates.as_ptr(), rates.len(), 10.0, std::ptr::null(), budget, 10, &mut m) };
    assert_eq!(st, SrStatus::Ok);
    m
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 128];
    let n = unsafe { sr_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf.iter().take(n.min(127)).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn obj1_matches_core() {
    let rates = [0.4, 0.25, 0.15];
    let m = new_model(&rates, 14);
    let core = SystemModel::with_uniform_cost(rates.to_vec(), 10.0, 1, 14, 10).unwrap();
    let inst = build_mck_instance(&core);
    let expect = decode_policy(&inst, &solve_exact_dp(&inst)).unwrap();

    let n = unsafe { sr_model_pair_count(m) };
    let mut x = vec![0u32; n];
    assert_eq!(unsafe { sr_solve_obj1(m, 0.0, x.as_mut_ptr(), n) }, SrStatus::Ok);
    assert_eq!(x, expect.rates());

    let mut omega = 0.0;
    assert_eq!(
        unsafe { sr_consistency_level(m, x.as_ptr(), n, &mut omega) },
        SrStatus::Ok
    );
    assert_eq!(omega, consistency_level(&core, &expect).unwrap().omega);

    let mut approx = vec![0u32; n];
    assert_eq!(unsafe { sr_solve_obj1(m, 0.1, approx.as_mut_ptr(), n) }, SrStatus::Ok);
    let mut cost = 0;
    assert_eq!(
        unsafe { sr_policy_cost(m, approx.as_ptr(), n, &mut cost) },
        SrStatus::Ok
    );
    assert!(cost <= 14);

    assert_eq!(unsafe { sr_homogeneous_policy(m, x.as_mut_ptr(), n) }, SrStatus::Ok);
    assert_eq!(x, homogeneous_policy(&core).rates());
    unsafe { sr_model_free(m) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut m = std::ptr::null_mut();
    let bad = [0.1];
    let st = unsafe { sr_model_new(bad.as_ptr(), 1, 10.0, std::ptr::null(), 0, 1, &mut m) };
    assert_eq!(st, SrStatus::InvalidArgument);
    assert!(m.is_null());
    assert!(!last_error().is_empty());

    let st = unsafe { sr_consistency_level(std::ptr::null(), std::ptr::null(), 0, std::ptr::null_mut()) };
    assert_eq!(st, SrStatus::NullPointer);

    let m = new_model(&[0.1, 0.2], 3);
    let mut small = [0u32; 1];
    assert_eq!(
        unsafe { sr_solve_obj1(m, 0.0, small.as_mut_ptr(), 1) },
        SrStatus::InvalidArgument
    );
    let over = [11u32, 0];
    let mut out = 0.0;
    assert_eq!(
        unsafe { sr_consistency_level(m, over.as_ptr(), 2, &mut out) },
        SrStatus::InvalidArgument
    );
    unsafe { sr_model_free(m) };
    unsafe { sr_model_free(std::ptr::null_mut()) };

    let (mut f, mut p) = (0.0, 0.0);
    let st = unsafe { sr_high_prob_bound(5, 10, 1, 5, 3, 0.5, 1.5, 0, &mut f, &mut p) };
    assert_eq!(st, SrStatus::InvalidArgument);

    let mut x = [0u32; 2];
    let st = unsafe {
        sr_stochastic_greedy(
            2,
            1,
            1,
            5,
            2,
            0,
            Some(constant),
            std::ptr::null_mut(),
            x.as_mut_ptr(),
            2,
            std::ptr::null_mut(),
        )
    };
    assert_eq!(st, SrStatus::BudgetExhaustsRates);

    let st = unsafe {
        sr_stochastic_greedy(
            2,
            1,
            1,
            2,
            2,
            0,
            Some(failing),
            std::ptr::null_mut(),
            x.as_mut_ptr(),
            2,
            std::ptr::null_mut(),
        )
    };
    assert_eq!(st, SrStatus::OracleFailed);
    assert!(last_error().contains("slot 1"));

    // success clears the message
    assert_eq!(
        unsafe { sr_high_prob_bound(5, 10, 1, 5, 3, 0.5, 0.3, 0, &mut f, &mut p) },
        SrStatus::Ok
    );
    assert!(last_error().is_empty());
}

#[test]
fn truncated_error_message() {
    let bad = [0.1];
    let mut m = std::ptr::null_mut();
    unsafe { sr_model_new(bad.as_ptr(), 1, 10.0, std::ptr::null(), 0, 1, &mut m) };
    let mut buf = [1 as std::ffi::c_char; 4];
    let n = unsafe { sr_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 3);
    assert_eq!(buf[3], 0);
    assert_eq!(unsafe { sr_last_error_message(std::ptr::null_mut(), 0) }, n);
}

unsafe extern "C" fn constant(_: *mut c_void, _: *const u32, _: usize, _: u64, psi: *mut f64) -> i32 {
    *psi = 1.0;
    0
}

unsafe extern "C" fn failing(_: *mut c_void, _: *const u32, _: usize, _: u64, _: *mut f64) -> i32 {
    -1
}

unsafe extern "C" fn weighted(ctx: *mut c_void, rates: *const u32, len: usize, _: u64, psi: *mut f64) -> i32 {
    let w = std::slice::from_raw_parts(ctx as *const f64, len);
    let x = std::slice::from_raw_parts(rates, len);
    *psi = w.iter().zip(x).map(|(w, &x)| w * f64::from(x)).sum();
    0
}

#[test]
fn learner_through_callback() {
    let mut w = [1.0, 5.0, 2.0, 2.0, 3.0, 1.0];
    let mut x = [0u32; 6];
    let mut slots = 0;
    let st = unsafe {
        sr_stochastic_greedy(
            3,
            6,
            2,
            4,
            4,
            9,
            Some(weighted),
            w.as_mut_ptr().cast(),
            x.as_mut_ptr(),
            6,
            &mut slots,
        )
    };
    assert_eq!(st, SrStatus::Ok);
    assert_eq!(x, [0, 4, 0, 0, 0, 0]);
    assert_eq!(slots, sr_training_time(6, 2, 4));
    assert_eq!(slots, 2 + 6 * 2 * 4);
}

#[test]
fn bounds_match_core() {
    assert_eq!(sr_expected_bound(5, 10, 1, 5, 0.5), expected_bound(5, 10, 1, 5, 0.5));
    assert!((sr_expected_bound(5, 10, 1, 5, 0.5) - 0.368).abs() < 1e-3);
    assert_eq!(sr_training_time(5, 3, 10), 153);
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/syncrate.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "sr_model_new",
        "sr_model_free",
        "sr_model_pair_count",
        "sr_consistency_level",
        "sr_policy_cost",
        "sr_solve_obj1",
        "sr_homogeneous_policy",
        "sr_expected_bound",
        "sr_high_prob_bound",
        "sr_training_time",
        "sr_stochastic_greedy",
        "sr_last_error_message",
        "SR_STATUS_BUDGET_EXHAUSTS_RATES",
        "typedef struct SrModel SrModel",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
}

fn staticlib() -> Option<PathBuf> {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libsyncrate_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_against_header_and_staticlib() {
    let (Some(lib), Ok(cc)) = (staticlib(), which_cc()) else {
        eprintln!("skipping: no C compiler or static library");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/c/smoke.c");
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C smoke test exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("omega="));
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .ok_or(())
}
