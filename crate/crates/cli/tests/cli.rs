//! Exit codes, artifacts and round trips of the `fraclab` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn fraclab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fraclab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn with_config(dir: &TempDir, json: &str) -> String {
    let path = dir.path().join("run.json");
    fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_key_exits_2_naming_it() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(&dir, r#"{"aa": 0.5}"#);
    let o = fraclab(&["verify", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("aa"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn out_of_range_order_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(&dir, r#"{"a": 1.5}"#);
    let o = fraclab(&["kernels", "--config", &cfg], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`a`"), "{}", stderr(&o));
}

#[test]
fn invert_without_data_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = fraclab(&["invert", "--out", "empty"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing data file"), "{}", stderr(&o));
}

#[test]
fn verify_writes_a_summary_of_every_check() {
    let dir = TempDir::new().unwrap();
    let o = fraclab(&["verify", "--out", "v"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("v/verify_summary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("check,lhs,rhs,residual,grid"));
    let names: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, fraclab::config::CHECKS);
    for name in names {
        assert!(dir.path().join(format!("v/verify/{name}.json")).is_file());
    }
    let overview: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("v/verify.json")).unwrap()).unwrap();
    assert_eq!(overview["schema_version"], 1);
}

#[test]
fn zero_potential_round_trip_recovers_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(&dir, r#"{"potential": {"kind": "zero"}, "source": {"size": 4}, "output_dir": "rt"}"#);
    let o = fraclab(&["respond", "--config", &cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = fraclab(&["invert", "--config", &cfg], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let est = fs::read_to_string(dir.path().join("rt/q_estimate.csv")).unwrap();
    let max = est
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap().abs())
        .fold(0.0, f64::max);
    assert!(max < 1e-6, "{max}");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("rt/inversion.json")).unwrap()).unwrap();
    assert_eq!(summary["truth_known"], true);
}

#[test]
fn echo_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(&dir, r#"{"grid": {"radial_count": 8, "angular_count": 32}, "kernels": {"points": 6}}"#);
    let o = fraclab(&["kernels", "--config", &cfg, "--out", "first"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = dir.path().join("first/config.json");
    let text = fs::read_to_string(&echo).unwrap();
    assert!(text.contains("\"patch_angular\""), "defaults are echoed");
    let o = fraclab(&["kernels", "--config", echo.to_str().unwrap(), "--out", "second"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let a = fs::read(dir.path().join("first/kernels.csv")).unwrap();
    let b = fs::read(dir.path().join("second/kernels.csv")).unwrap();
    assert_eq!(a, b);
    let table = String::from_utf8(a).unwrap();
    assert!(table.starts_with("x1,x2,z1,z2,G,R0\n"));
    assert_eq!(table.lines().count(), 1 + 6 * 5);
}

#[test]
fn counterexample_respects_the_seed_flag() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(&dir, r#"{"grid": {"radial_count": 10, "angular_count": 40}, "counterexample": {"degree": 4}}"#);
    let run = |seed: &str, out: &str| {
        let o = fraclab(&["counterexample", "--config", &cfg, "--seed", seed, "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(dir.path().join(out).join("counterexample.csv")).unwrap()
    };
    let a = run("1", "s1");
    assert_eq!(a, run("1", "s1b"));
    assert_ne!(a, run("2", "s2"));
}

#[test]
fn forward_writes_fields_and_plots() {
    let dir = TempDir::new().unwrap();
    let cfg = with_config(
        &dir,
        r#"{"grid": {"radial_count": 8, "angular_count": 32}, "source": {"size": 2}, "verify": {"quad_level": 1}}"#,
    );
    let o = fraclab(&["forward", "--config", &cfg, "--plot", "--out", "f"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let field = fs::read_to_string(dir.path().join("f/field.csv")).unwrap();
    assert!(field.starts_with("x1,x2,weight,q,u_0,u_1\n"));
    assert_eq!(field.lines().count(), 1 + 8 * 32);
    assert!(dir.path().join("f/traces.svg").is_file());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("f/forward.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "forward");
    assert!(report["solve_residuals"].as_array().unwrap().iter().all(|r| r.as_f64().unwrap() <= 1e-10));
}
