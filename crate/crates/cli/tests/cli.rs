use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn mcx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcx")).args(args).output().unwrap()
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run_ok(args: &[&str]) -> String {
    let out = mcx(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&run_ok(args)).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CONST_KERNEL: &str = r#"{"rows": {"grid": {"from": 0, "to": 1, "n": 4}}, "cols": {"grid": {"from": 0, "to": 1, "n": 4}}, "expr": "1"}"#;

#[test]
fn constant_kernel_needs_one_ball() {
    let dir = TempDir::new().unwrap();
    let k = write(&dir, "k.json", CONST_KERNEL);
    let csv = run_ok(&["covering", s(&k), "--levels", "4,8,16", "--eps", "0.3,0.1"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epsilon,level,row_count,col_count,classification"));
    let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(data.len(), 6);
    for l in data {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!((f[2], f[3], f[4]), ("1", "1", "bounded"), "{l}");
    }
    assert!(csv.ends_with("# classification=bounded rows=bounded cols=bounded\n"));
}

#[test]
fn identity_kernel_grows() {
    let dir = TempDir::new().unwrap();
    let k = write(
        &dir,
        "id.json",
        r#"{"rows": {"grid": {"from": 0, "to": 1, "n": 4}}, "cols": {"grid": {"from": 0, "to": 1, "n": 4}}, "expr": "ind(x <= y)*ind(y <= x)"}"#,
    );
    let out = dir.path().join("profile.csv");
    run_ok(&["covering", s(&k), "--levels", "8,16,32", "--orientation", "rows", "--out", s(&out)]);
    let csv = std::fs::read_to_string(out).unwrap();
    let counts: Vec<&str> = csv.lines().skip(1).filter(|l| !l.starts_with('#')).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(counts, ["8", "16", "32"]);
    assert!(csv.contains("# classification=growing rows=growing cols=-"));
}

#[test]
fn double_limit_of_a_constant() {
    let dir = TempDir::new().unwrap();
    let k = write(&dir, "k.json", r#"{"rows": {"integers": [0, 15]}, "cols": {"integers": [0, 15]}, "expr": "2"}"#);
    let v = json(&["double-limit", s(&k)]);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["converged"], true);
    assert_eq!((v["limit_row_first"].as_f64(), v["gap"].as_f64()), (Some(2.0), Some(0.0)));
}

#[test]
fn oscillating_sequences_are_reported_not_rejected() {
    let dir = TempDir::new().unwrap();
    let k = write(&dir, "k.json", r#"{"rows": {"integers": [0, 15]}, "cols": {"integers": [0, 15]}, "expr": "sin(x*y)"}"#);
    let v = json(&["double-limit", s(&k)]);
    assert_eq!(v["converged"], false);
}

#[test]
fn envelope_at_a_sample_point_returns_the_sample() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "f.json", r#"{"expr": "s*s + 1", "domain": [0, 1], "depth": 10}"#);
    let csv = run_ok(&["envelope", s(&f), "--targets", "1/2,3/2^3"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,upper,lower,gap,converged,value_or_flag"));
    for (line, t) in lines.zip([0.5f64, 0.375]) {
        let value: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((value - (t * t + 1.0)).abs() <= 1e-6, "{line}");
    }
}

#[test]
fn identity_semigroup_extends_to_the_identity() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.json", r#"{"dimension": 2, "depth": 8, "entries_expr": [["1", "0"], ["0", "1"]]}"#);
    let v = json(&["extend-semigroup", s(&g), "--times", "1/3,1/7,0.9"]);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["all_extended"], true);
    assert_eq!(v["construction_defect"]["max_defect"], 0.0);
    for e in v["extensions"].as_array().unwrap() {
        assert_eq!(e["matrix"], serde_json::json!([[1.0, 0.0], [0.0, 1.0]]));
        assert_eq!(e["semigroup_defect_after"], 0.0);
    }
    assert_eq!(v["verification"]["max_defect"], 0.0);
}

#[test]
fn constant_function_is_almost_periodic() {
    let csv = run_ok(&["ap", "1", "--triple-density", "2"]);
    for l in csv.lines().skip(1).filter(|l| !l.starts_with('#')) {
        assert_eq!(l.split(',').nth(3), Some("1"), "{l}");
    }
    for g in ["x|y", "L|IxJ", "J|IxL", "I|JxL"] {
        assert!(csv.lines().any(|l| l.starts_with(g)), "{g} missing");
    }
    assert!(csv.ends_with("# almost-periodic=almost-periodic-consistent\n"));
}

#[test]
fn gallery_files_round_trip_through_double_limit() {
    let dir = TempDir::new().unwrap();
    let listing = run_ok(&["gallery", "--name", "remark2", "--out-dir", s(dir.path())]);
    assert_eq!(listing.lines().count(), 4);
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("remark2_expected.json")).unwrap()).unwrap();
    assert_eq!(expected["xy_a"]["gap"], 1.0);

    // diagonal rows (e_n, e_n) sit at n * 8 + n in the product sampling
    let diag: Vec<String> = (0..8).map(|n| (9 * n).to_string()).collect();
    let spec = dir.path().join("remark2_xy_a.json");
    let v = json(&["double-limit", s(&spec), "--rows", &diag.join(","), "--cols", "0..8"]);
    assert_eq!(v["converged"], true);
    assert_eq!((v["limit_row_first"].as_f64(), v["limit_col_first"].as_f64()), (Some(1.0), Some(0.0)));

    let inv = json(&["gallery", "--name", "sin-inv"]);
    let f = write(&dir, "sin_inv.json", &inv["sin_inv.json"].to_string());
    let csv = run_ok(&["envelope", s(&f), "--targets", "0"]);
    assert!(csv.lines().nth(1).unwrap().ends_with("not-extendable"), "{csv}");
}

#[test]
fn input_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let broken = write(&dir, "broken.json", "{\"rows\": ");
    let mismatch = write(&dir, "m.json", r#"{"dimension": 3, "depth": 6, "entries_expr": [["1", "0"], ["0", "1"]]}"#);
    let unknown = write(&dir, "u.json", r#"{"rows": [0], "cols": [0], "expr": "1", "colour": 3}"#);
    let cases: [&[&str]; 5] = [
        &["covering", s(&broken)],
        &["covering", s(&unknown)],
        &["extend-semigroup", s(&mismatch)],
        &["covering", "/definitely/not/here.json"],
        &["gallery", "--name", "indicator", "--dim", "4"],
    ];
    for args in cases {
        let out = mcx(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("mcx: "));
    }
}

#[test]
fn numerical_failures_exit_3() {
    let dir = TempDir::new().unwrap();
    let g = write(
        &dir,
        "bad.json",
        r#"{"dimension": 1, "t_max": 2, "depth": 10, "entries_expr": [["exp(-s) + 0.1*ind(s <= 0.5)*ind(0.5 <= s)"]]}"#,
    );
    let out = mcx(&["extend-semigroup", s(&g)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("semigroup defect invariant violated"));
}
