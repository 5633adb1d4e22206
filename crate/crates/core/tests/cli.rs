use std::path::{Path, PathBuf};
use std::process::Command;

use pmdlab::cli::run;
use pmdlab::lattice::{ParamMatrix, PmdSampler};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn pmdlab(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("pmdlab").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn binomial_file(dir: &TempDir, n: usize) -> PathBuf {
    let pm = ParamMatrix::repeated(&[0.5, 0.5], n).unwrap();
    write(dir, &format!("bin{n}.json"), &serde_json::to_string(&pm).unwrap())
}

#[test]
fn pmf_and_tv() {
    let dir = TempDir::new().unwrap();
    let m = binomial_file(&dir, 2);
    assert_eq!(pmdlab(&["pmf", s(&m), "--point", "1,1"]), (0, "0.5\n".into(), String::new()));
    assert_eq!(pmdlab(&["pmf", s(&m), "--point", "3,-1"]).1, "0\n");
    let (code, out, _) = pmdlab(&["--json", "pmf", s(&m), "--point", "2,0"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["schema"], "pmdlab/1");
    assert_eq!(v["probability"], 0.25);

    let pmf = write(&dir, "p.json", r#"{"k":2,"points":[{"x":[2,0],"p":0.5},{"x":[0,2],"p":0.5}]}"#);
    // binomial(2, 1/2) vs {(2,0), (0,2)} each ½: TV = ½(¼+¼+½) = ½
    assert_eq!(pmdlab(&["tv", s(&m), s(&pmf)]).1, "0.5\n");
    assert_eq!(pmdlab(&["tv", s(&m), s(&m)]).1, "0\n");
}

#[test]
fn input_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", "{");
    let (code, _, err) = pmdlab(&["pmf", s(&bad), "--point", "0"]);
    assert_eq!(code, 2);
    assert!(err.starts_with("error:"));
    let (code, _, err) = pmdlab(&["--json", "tv", s(&bad), s(&bad)]);
    assert_eq!(code, 2);
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["exit_code"], 2);
    assert_eq!(pmdlab(&["pmf", "/nonexistent.json", "--point", "0"]).0, 2);
    assert_eq!(pmdlab(&["frobnicate"]).0, 2);
    let m = binomial_file(&dir, 2);
    assert_eq!(pmdlab(&["pmf", s(&m), "--point", "1"]).0, 2);
}

#[test]
fn decompose_reports_ledger_and_caps() {
    let dir = TempDir::new().unwrap();
    let m = binomial_file(&dir, 120);
    let (code, out, _) = pmdlab(&["--json", "decompose", s(&m), "--c", "0.01", "--t", "20", "--gamma", "6.5"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let tv = v["measured_tv"].as_f64().unwrap();
    let ledger = v["ledger_total"].as_f64().unwrap();
    assert!(tv <= ledger + 0.02, "{tv} vs {ledger}");
    let (code, _, err) = pmdlab(&["decompose", s(&m), "--theory", "--epsilon", "0.1"]);
    assert_eq!(code, 4, "{err}");
    assert_eq!(pmdlab(&["decompose", s(&m), "--theory", "--epsilon", "0.1", "--dry-run"]).0, 0);
}

#[test]
fn cover_streams_json_lines() {
    let (code, out, err) = pmdlab(&["cover", "--kind", "grid-pmd", "--n", "2", "--k", "2", "--granularity", "0.5"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(err.trim(), format!("count: {}", lines.len()));
    for l in &lines {
        serde_json::from_str::<serde_json::Value>(l).unwrap();
    }
    assert!(!lines.is_empty());
    let (code, _, _) = pmdlab(&["cover", "--kind", "grid-pmd", "--n", "50", "--k", "3", "--granularity", "0.01", "--cap", "10"]);
    assert_eq!(code, 4);
}

fn sample_csv(dir: &TempDir) -> (PathBuf, PathBuf) {
    let pm = ParamMatrix::repeated(&[0.5, 0.5], 60).unwrap();
    let s = PmdSampler::new(&pm);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut text = String::from("a,b\n");
    for _ in 0..3000 {
        let x = s.sample(&mut rng);
        text.push_str(&format!("{},{}\n", x[0], x[1]));
    }
    (write(dir, "samples.csv", &text), write(dir, "truth.json", &serde_json::to_string(&pm).unwrap()))
}

#[test]
fn learn_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (csv, truth) = sample_csv(&dir);
    let log = dir.path().join("log.json");
    let args = ["--json", "learn", s(&csv), "--kind", "pmd", "--k", "2", "--seed", "9", "--truth", s(&truth), "--log", s(&log)];
    let a = pmdlab(&args);
    let log_a = std::fs::read(&log).unwrap();
    let b = pmdlab(&args);
    assert_eq!(a.0, 0, "{}", a.2);
    assert_eq!(a, b);
    assert_eq!(log_a, std::fs::read(&log).unwrap());
    let v: serde_json::Value = serde_json::from_str(&a.1).unwrap();
    assert!(v["tv_to_truth"].as_f64().unwrap() < 0.15);
    assert_eq!(v["report"]["kind"], "pmd");
}

#[test]
fn learn_siirv_rejects_wrong_dimension() {
    let dir = TempDir::new().unwrap();
    let (csv, _) = sample_csv(&dir);
    assert_eq!(pmdlab(&["learn", s(&csv), "--kind", "siirv", "--k", "2", "--seed", "1"]).0, 2);
}

#[test]
fn binary_honours_environment() {
    let exe = env!("CARGO_BIN_EXE_pmdlab");
    let dir = TempDir::new().unwrap();
    let (csv, _) = sample_csv(&dir);
    let st =
        Command::new(exe).args(["learn", s(&csv), "--kind", "pmd", "--k", "2"]).env("PMDLAB_STRICT_SEED", "1").output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("--seed"));

    let m = binomial_file(&dir, 30);
    let st = Command::new(exe).args(["pmf", s(&m), "--point", "15,15"]).env("PMDLAB_SUPPORT_CAP", "10").output().unwrap();
    assert_eq!(st.status.code(), Some(3));
    let st = Command::new(exe).args(["pmf", s(&m), "--point", "15,15"]).env_remove("PMDLAB_SUPPORT_CAP").output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&st.stdout), "0.144464448094\n");
}
