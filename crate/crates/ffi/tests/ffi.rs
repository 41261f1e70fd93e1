use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use selfcorr::config::RunConfig;
use selfcorr::suite::{Suite, SuiteSpec};
use selfcorr_ffi::*;

fn cs(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    sc_string_free(p);
    s
}

fn last_error() -> String {
    let p = sc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn tokenize_and_values() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(sc_tokenize(cs("print(a + 1)").as_ptr(), &mut s), ScStatus::Ok);
        assert_eq!(take(s), "print ( a + 1 )");

        let mut v = -1.0;
        assert_eq!(sc_program_value(cs("a = 6 * 7\nprint(a)").as_ptr(), 42.0, &mut v), ScStatus::Ok);
        assert_eq!(v, 1.0);
        assert_eq!(sc_program_value(cs("a = 6 +").as_ptr(), 42.0, &mut v), ScStatus::Ok);
        assert_eq!(v, 0.0);

        let cons = [cs("dog"), cs("jump"), cs("ball")];
        let ptrs: Vec<*const c_char> = cons.iter().map(|c| c.as_ptr()).collect();
        assert_eq!(sc_coverage_value(ptrs.as_ptr(), 3, cs("the dogs jumped").as_ptr(), &mut v), ScStatus::Ok);
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(sc_coverage_value(ptr::null(), 0, cs("x").as_ptr(), &mut v), ScStatus::Ok);
        assert_eq!(v, 1.0);

        assert_eq!(sc_similarity(cs("a b c d").as_ptr(), cs("a b x d").as_ptr(), &mut v), ScStatus::Ok);
        assert!((v - 0.75).abs() < 1e-12);
    }
}

#[test]
fn pair_weight_matches_closed_form() {
    unsafe {
        let mut w = 0.0;
        let st = sc_pair_weight(cs("a b c d").as_ptr(), 0.0, cs("a b x d").as_ptr(), 0.5, 2.0, 3.0, &mut w);
        assert_eq!(st, ScStatus::Ok);
        assert!((w - (2.0f64 * 0.5 + 3.0 * 0.75).exp()).abs() < 1e-9);

        let st = sc_pair_weight(cs("a").as_ptr(), 1.0, cs("b").as_ptr(), 1.0, 1.0, 1.0, &mut w);
        assert_eq!(st, ScStatus::Config);
        assert!(last_error().contains("higher"));
    }
}

#[test]
fn null_and_bad_utf8_are_reported() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(sc_tokenize(ptr::null(), &mut s), ScStatus::NullPointer);
        assert!(last_error().contains("input"));
        assert_eq!(sc_tokenize(cs("x").as_ptr(), ptr::null_mut()), ScStatus::NullPointer);
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(sc_tokenize(bad.as_ptr().cast(), &mut s), ScStatus::InvalidUtf8);
        assert_eq!(sc_tokenize(cs("ok").as_ptr(), &mut s), ScStatus::Ok);
        assert!(sc_last_error_message().is_null());
        sc_string_free(s);
        sc_string_free(ptr::null_mut());
        sc_corrector_free(ptr::null_mut());
        sc_datapool_free(ptr::null_mut());
    }
}

fn trained_run(dir: &Path) -> std::path::PathBuf {
    let spec = SuiteSpec {
        train: 16,
        valid: 0,
        test: 4,
        ..Default::default()
    };
    Suite::generate(&spec).unwrap().write(&dir.join("suite")).unwrap();
    let mut cfg = RunConfig {
        suite: dir.join("suite"),
        ..Default::default()
    };
    cfg.hyper.iterations = 1;
    cfg.hyper.learn_steps = 20;
    let run = dir.join("run");
    selfcorr::run::cmd_train(&cfg, &run).unwrap();
    run
}

#[test]
fn corrector_and_datapool_handles() {
    let tmp = tempfile::tempdir().unwrap();
    let run = trained_run(tmp.path());
    unsafe {
        let mut c = ptr::null_mut();
        assert_eq!(sc_corrector_open(cs(run.to_str().unwrap()).as_ptr(), &mut c), ScStatus::Ok);
        assert!(!c.is_null());

        let mut s = ptr::null_mut();
        let st = sc_corrector_correct(c, cs("a prompt").as_ptr(), cs("a = 1").as_ptr(), ptr::null(), &mut s);
        assert_eq!(st, ScStatus::Ok);
        take(s);

        let st = sc_corrector_infer(c, cs("math-test-0001").as_ptr(), 2, &mut s);
        assert_eq!(st, ScStatus::Ok);
        let traj: serde_json::Value = serde_json::from_str(&take(s)).unwrap();
        assert_eq!(traj["input_id"], "math-test-0001");
        assert!(traj["steps"].as_array().unwrap().len() <= 3);

        assert_eq!(sc_corrector_infer(c, cs("nope").as_ptr(), -1, &mut s), ScStatus::Config);
        sc_corrector_free(c);

        let mut p = ptr::null_mut();
        let path = run.join("datapool.jsonl");
        assert_eq!(sc_datapool_open(cs(path.to_str().unwrap()).as_ptr(), &mut p), ScStatus::Ok);
        let (mut len, mut pairs) = (0usize, 0usize);
        assert_eq!(sc_datapool_len(p, &mut len), ScStatus::Ok);
        assert_eq!(sc_datapool_pair_count(p, &mut pairs), ScStatus::Ok);
        let expected = selfcorr::engine::Datapool::read(&path).unwrap().len();
        assert_eq!(len, expected);
        assert!(pairs > 0);
        sc_datapool_free(p);
    }
}

#[test]
fn opening_missing_things_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    unsafe {
        let mut c = ptr::null_mut::<ScCorrector>();
        let st = sc_corrector_open(cs(tmp.path().to_str().unwrap()).as_ptr(), &mut c);
        assert_eq!(st, ScStatus::Config);
        assert!(c.is_null());
        let mut p = ptr::null_mut::<ScDatapool>();
        let st = sc_datapool_open(cs(tmp.path().join("none.jsonl").to_str().unwrap()).as_ptr(), &mut p);
        assert_eq!(st, ScStatus::Config);
        assert!(p.is_null());
        assert!(!last_error().is_empty());
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/selfcorr.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["sc_corrector_open", "sc_datapool_pair_count", "SC_STATUS_OK", "typedef struct ScCorrector ScCorrector"] {
        assert!(text.contains(name), "{name}");
    }
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        return;
    };
    if !cc.status.success() {
        return;
    }
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
