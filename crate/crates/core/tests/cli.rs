use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mldegree"))
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn reml_fit_of_balanced_layout() {
    let dir = TempDir::new().unwrap();
    let y = write(dir.path(), "y.csv", "1\n2\n3\n5\n");
    let out = run(&["fit", "--mode", "reml", "--y", y.to_str().unwrap(), "--groups", "2,2", "--w", "ones"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let doc = stdout_json(&out);
    assert_eq!(doc["command"], "fit");
    let s1 = doc["s_hat"]["sigma1_sq"].as_f64().unwrap();
    let s2 = doc["s_hat"]["sigma2_sq"].as_f64().unwrap();
    assert!((s1 - 2.5).abs() < 1e-10 && (s2 - 1.25).abs() < 1e-10, "{s1} {s2}");
    assert!((doc["beta_hat"][0].as_f64().unwrap() - 2.75).abs() < 1e-10);
}

#[test]
fn ml_fit_with_incidence_and_kernel_files_agree() {
    let dir = TempDir::new().unwrap();
    let y = write(dir.path(), "y.csv", "1,2,3,5\n");
    let z = write(dir.path(), "z.csv", "1,0\n1,0\n0,1\n0,1\n");
    let v = write(dir.path(), "v.csv", "1,1,0,0\n1,1,0,0\n0,0,1,1\n0,0,1,1\n");
    let x = write(dir.path(), "x.csv", "1\n1\n1\n1\n");
    let a = run(&["fit", "--y", y.to_str().unwrap(), "--z", z.to_str().unwrap(), "--w", "ones"]);
    let b = run(&["fit", "--y", y.to_str().unwrap(), "--v", v.to_str().unwrap(), "--x", x.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    let (da, db) = (stdout_json(&a), stdout_json(&b));
    for k in ["sigma1_sq", "sigma2_sq"] {
        let (u, w) = (da["s_hat"][k].as_f64().unwrap(), db["s_hat"][k].as_f64().unwrap());
        assert!((u - w).abs() < 1e-10);
    }
    assert!((da["s_hat"]["sigma1_sq"].as_f64().unwrap() - 0.9375).abs() < 1e-10);
}

#[test]
fn response_in_mean_space_exits_two() {
    let dir = TempDir::new().unwrap();
    let y = write(dir.path(), "y.csv", "1\n2\n3\n4\n5\n6\n");
    let x = write(dir.path(), "x.csv", "1,1\n1,2\n1,3\n1,4\n1,5\n1,6\n");
    let out = run(&["fit", "--y", y.to_str().unwrap(), "--x", x.to_str().unwrap(), "--groups", "3,3"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let doc = stdout_json(&out);
    assert!(doc["s_hat"].is_null());
    assert_eq!(doc["existence"]["ml_condition"], false);
    assert!(doc["nonexistence"].as_str().unwrap().starts_with("ml_condition"));
}

#[test]
fn degree_report_for_unbalanced_layout() {
    let out = run(&["degree", "--groups", "1,2,3", "--w", "ones", "--reps", "40", "--seed", "11"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let doc = stdout_json(&out);
    assert_eq!(doc["command"], "degree");
    assert_eq!(doc["bound"], 6);
    assert_eq!(doc["violations"], serde_json::json!([]));
    assert!(doc["max_count"].as_u64().unwrap() <= 6);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let args = ["degree", "--mode", "reml", "--groups", "2,3,4", "--w", "ones", "--reps", "25", "--seed", "5"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);

    let sim = ["simulate", "--groups", "2,2,3", "--w", "ones", "--sigma1-sq", "2", "--sigma2-sq", "0.5", "--beta", "-1.5", "--seed", "9"];
    assert_eq!(run(&sim).stdout, run(&sim).stdout);
}

#[test]
fn simulate_then_fit() {
    let dir = TempDir::new().unwrap();
    let y = dir.path().join("y.csv");
    let groups = "5,6,7,8,9,10,11,12";
    let sim = run(&[
        "simulate", "--groups", groups, "--w", "ones", "--sigma1-sq", "4", "--sigma2-sq", "1", "--beta", "3",
        "--seed", "21", "--out", y.to_str().unwrap(),
    ]);
    assert_eq!(sim.status.code(), Some(0), "{}", stderr(&sim));
    assert!(sim.stdout.is_empty());
    let lines = std::fs::read_to_string(&y).unwrap();
    assert_eq!(lines.lines().count(), 68);

    let fit = run(&["fit", "--mode", "reml", "--y", y.to_str().unwrap(), "--groups", groups, "--w", "ones", "--oracle"]);
    assert_eq!(fit.status.code(), Some(0), "{}", stderr(&fit));
    let doc = stdout_json(&fit);
    let s2 = doc["s_hat"]["sigma2_sq"].as_f64().unwrap();
    assert!(s2 > 0.4 && s2 < 2.5, "sigma2_sq = {s2}");
    let ll = doc["loglik"].as_f64().unwrap();
    let oracle = doc["oracle"]["loglik_dense"].as_f64().unwrap();
    assert!(ll >= oracle - 1e-6, "{ll} vs oracle {oracle}");
}

#[test]
fn errors_are_one_machine_readable_line() {
    let dir = TempDir::new().unwrap();
    let y = write(dir.path(), "y.csv", "1\n2\n3\n");
    let junk = write(dir.path(), "junk.csv", "1\nabc\n2\n");
    let ragged = write(dir.path(), "v.csv", "1,0\n0\n");
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["fit", "--y", y.to_str().unwrap(), "--groups", "2,2", "--w", "ones"], "E_DIM"),
        (vec!["fit", "--y", junk.to_str().unwrap(), "--groups", "2,1", "--w", "ones"], "E_INPUT"),
        (vec!["fit", "--y", y.to_str().unwrap(), "--v", ragged.to_str().unwrap(), "--w", "ones"], "E_DIM"),
        (vec!["fit", "--y", "/nonexistent/y.csv", "--groups", "2,1", "--w", "ones"], "E_INPUT"),
        (vec!["fit", "--bogus"], "E_USAGE"),
        (vec!["simulate", "--groups", "2,2", "--w", "ones", "--sigma1-sq", "1", "--sigma2-sq", "0"], "E_VARIANCE"),
    ];
    for (args, code) in cases {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        let err = stderr(&out);
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with(&format!("error[{code}]: ")), "{args:?}: {err}");
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("degree"));
}
