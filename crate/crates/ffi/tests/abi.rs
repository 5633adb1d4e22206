use std::ffi::{CStr, CString};
use std::ptr;

use pmdlab_ffi::*;

fn last_error() -> String {
    let p = pmd_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn binomial_matrix(n: usize) -> *mut PmdMatrix {
    let rows: Vec<f64> = (0..n).flat_map(|_| [0.5, 0.5]).collect();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { pmd_matrix_new(2, n, rows.as_ptr(), &mut m) }, PmdStatus::Ok);
    m
}

#[test]
fn exact_pmf_roundtrip() {
    unsafe {
        let m = binomial_matrix(2);
        let (mut n, mut k) = (0, 0);
        assert_eq!(pmd_matrix_shape(m, &mut n, &mut k), PmdStatus::Ok);
        assert_eq!((n, k), (2, 2));
        let mut p = ptr::null_mut();
        assert_eq!(pmd_pmf_exact(m, &mut p), PmdStatus::Ok);
        assert_eq!(pmd_pmf_len(p), 3);
        let mut v = 0.0;
        assert_eq!(pmd_pmf_prob(p, [1i64, 1].as_ptr(), 2, &mut v), PmdStatus::Ok);
        assert_eq!(v, 0.5);
        assert_eq!(pmd_pmf_prob(p, [1i64].as_ptr(), 1, &mut v), PmdStatus::InvalidArgument);
        let mut tv = 1.0;
        assert_eq!(pmd_tv_distance(p, p, &mut tv), PmdStatus::Ok);
        assert_eq!(tv, 0.0);
        pmd_pmf_free(p);
        pmd_matrix_free(m);
    }
}

#[test]
fn siirv_pmf() {
    unsafe {
        let json = CString::new(r#"{"k":2,"n":1,"rows":[[0.25,0.75]]}"#).unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(pmd_matrix_from_json(json.as_ptr(), &mut m), PmdStatus::Ok);
        let mut p = ptr::null_mut();
        assert_eq!(pmd_siirv_pmf_exact(m, &mut p), PmdStatus::Ok);
        let mut v = 0.0;
        assert_eq!(pmd_pmf_prob(p, [1i64].as_ptr(), 1, &mut v), PmdStatus::Ok);
        assert_eq!(v, 0.75);
        pmd_pmf_free(p);
        pmd_matrix_free(m);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(pmd_matrix_new(2, 1, ptr::null(), &mut m), PmdStatus::NullPointer);
        assert!(last_error().contains("rows"));
        assert_eq!(pmd_matrix_new(2, 1, [0.7, 0.7].as_ptr(), &mut m), PmdStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        let bad = CString::new("{not json").unwrap();
        assert_eq!(pmd_matrix_from_json(bad.as_ptr(), &mut m), PmdStatus::Parse);
        assert!(m.is_null());
        let mut v = 0.0;
        assert_eq!(pmd_tv_distance(ptr::null(), ptr::null(), &mut v), PmdStatus::NullPointer);
        // a success clears the message
        let m = binomial_matrix(1);
        assert!(pmd_last_error_message().is_null());
        pmd_matrix_free(m);
        pmd_matrix_free(ptr::null_mut());
        pmd_pmf_free(ptr::null_mut());
        pmd_hypothesis_free(ptr::null_mut());
        pmd_string_free(ptr::null_mut());
        assert_eq!(pmd_pmf_len(ptr::null()), 0);
    }
}

#[test]
fn decompose_matches_exact() {
    unsafe {
        let m = binomial_matrix(60);
        let mut h = ptr::null_mut();
        let mut ledger = -1.0;
        assert_eq!(pmd_decompose(m, 0.0, 0.0, 0.0, &mut h, &mut ledger), PmdStatus::Ok);
        assert!(ledger >= 0.0);
        let (mut hp, mut ep) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(pmd_hypothesis_tabulate(h, &mut hp), PmdStatus::Ok);
        assert_eq!(pmd_pmf_exact(m, &mut ep), PmdStatus::Ok);
        let mut tv = 1.0;
        assert_eq!(pmd_tv_distance(hp, ep, &mut tv), PmdStatus::Ok);
        assert!(tv <= ledger + 1e-9, "{tv} > {ledger}");
        let mut s = ptr::null_mut();
        assert_eq!(pmd_hypothesis_to_json(h, &mut s), PmdStatus::Ok);
        let text = CStr::from_ptr(s).to_str().unwrap().to_owned();
        pmd_string_free(s);
        assert!(serde_json::from_str::<serde_json::Value>(&text).is_ok());
        pmd_pmf_free(hp);
        pmd_pmf_free(ep);
        pmd_hypothesis_free(h);
        pmd_matrix_free(m);
    }
}

#[test]
fn learn_constant_siirv() {
    unsafe {
        let samples = vec![3i64; 200];
        let mut h = ptr::null_mut();
        let st = pmd_learn_siirv(samples.as_ptr(), samples.len(), 4, 0.2, 0.1, 5, &mut h);
        assert_eq!(st, PmdStatus::Ok, "{}", last_error());
        let mut v = 0.0;
        assert_eq!(pmd_hypothesis_pmf(h, [3i64].as_ptr(), 1, &mut v), PmdStatus::Ok);
        assert!(v > 0.99, "{v}");
        pmd_hypothesis_free(h);
        assert_eq!(pmd_learn_siirv(ptr::null(), 0, 4, 0.2, 0.1, 5, &mut h), PmdStatus::InvalidArgument);
    }
}

#[test]
fn learn_deterministic_pmd() {
    unsafe {
        let samples: Vec<i64> = (0..100).flat_map(|_| [2i64, 5, 1]).collect();
        let mut h = ptr::null_mut();
        let st = pmd_learn_pmd(samples.as_ptr(), 100, 3, 0.2, 0.1, 1, &mut h);
        assert_eq!(st, PmdStatus::Ok, "{}", last_error());
        let mut v = 0.0;
        assert_eq!(pmd_hypothesis_pmf(h, [2i64, 5, 1].as_ptr(), 3, &mut v), PmdStatus::Ok);
        assert!(v > 0.99, "{v}");
        pmd_hypothesis_free(h);
    }
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(pmd_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/pmdlab.h");
    for name in [
        "pmd_matrix_new",
        "pmd_matrix_from_json",
        "pmd_pmf_exact",
        "pmd_tv_distance",
        "pmd_decompose",
        "pmd_learn_siirv",
        "pmd_learn_pmd",
        "pmd_hypothesis_to_json",
        "pmd_last_error_message",
        "PMD_STATUS_PANIC",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

/// Compile the C smoke test against the header and static library when a C compiler is present.
#[test]
fn c_smoke() {
    use std::process::Command;
    let dir = env!("CARGO_MANIFEST_DIR");
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libpmdlab_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping C smoke test");
        return;
    }
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let st = Command::new("cc")
        .args([format!("{dir}/tests/c/smoke.c"), "-I".into(), format!("{dir}/include")])
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(st.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{:?}", run);
    assert!(String::from_utf8_lossy(&run.stdout).contains("ok"));
}
