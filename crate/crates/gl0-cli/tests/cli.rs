//! End-to-end tests of the `gl0` binary: generate, fit, certify, evaluate,
//! and the documented exit codes.

use std::path::Path;
use std::process::Command;

fn gl0() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gl0"))
}

fn gen_instance(dir: &Path) {
    let status = gl0()
        .args([
            "gen",
            "--n",
            "60",
            "--q",
            "6",
            "--group-size",
            "2",
            "--k-star",
            "2",
            "--snr",
            "10",
            "--seed",
            "7",
            "--out",
        ])
        .arg(dir)
        .status()
        .expect("binary runs");
    assert!(status.success());
    for file in ["X.csv", "y.csv", "groups.txt", "beta_star.csv"] {
        assert!(dir.join(file).exists(), "{file} missing");
    }
}

#[test]
fn gen_fit_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    gen_instance(dir.path());

    let best = dir.path().join("best.csv");
    let output = gl0()
        .args(["fit", "--x"])
        .arg(dir.path().join("X.csv"))
        .arg("--y")
        .arg(dir.path().join("y.csv"))
        .arg("--groups")
        .arg(dir.path().join("groups.txt"))
        .args(["--n-lambda", "10", "--solver", "local-search", "--out"])
        .arg(&best)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("lambda0"), "missing header: {stdout}");
    assert!(best.exists());

    let output = gl0()
        .args(["eval", "--x"])
        .arg(dir.path().join("X.csv"))
        .arg("--groups")
        .arg(dir.path().join("groups.txt"))
        .arg("--beta-hat")
        .arg(&best)
        .arg("--beta-star")
        .arg(dir.path().join("beta_star.csv"))
        .output()
        .unwrap();
    assert!(output.status.success());
    let metrics: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("eval prints JSON");
    assert!(metrics["f1"].as_f64().unwrap() >= 0.0);
    assert!(metrics["test_mse"].as_f64().unwrap() >= 0.0);
}

#[test]
fn fit_exact_emits_certified_json() {
    let dir = tempfile::tempdir().unwrap();
    gen_instance(dir.path());
    let out = dir.path().join("result.json");
    let status = gl0()
        .args(["fit-exact", "--x"])
        .arg(dir.path().join("X.csv"))
        .arg("--y")
        .arg(dir.path().join("y.csv"))
        .arg("--groups")
        .arg(dir.path().join("groups.txt"))
        .args(["--lambda0", "0.05", "--gap", "1e-6", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let lb = json["lb"].as_f64().unwrap();
    let ub = json["ub"].as_f64().unwrap();
    assert!(lb <= ub + 1e-9);
    assert!(json["gap"].as_f64().unwrap() <= 1e-6 + 1e-12);
    assert_eq!(json["objective"].as_f64().unwrap(), ub);
    assert!(json["theta"].as_array().unwrap().len() == 12);
}

#[test]
fn path_writes_jsonl_and_theta_files() {
    let dir = tempfile::tempdir().unwrap();
    gen_instance(dir.path());
    let out = dir.path().join("path");
    let status = gl0()
        .args(["path", "--x"])
        .arg(dir.path().join("X.csv"))
        .arg("--y")
        .arg(dir.path().join("y.csv"))
        .arg("--groups")
        .arg(dir.path().join("groups.txt"))
        .args(["--n-lambda", "5", "--solver", "bcd", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let index = std::fs::read_to_string(out.join("path.jsonl")).unwrap();
    let lines: Vec<&str> = index.lines().collect();
    assert_eq!(lines.len(), 5);
    for line in lines {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(record["lambda0"].as_f64().unwrap() > 0.0);
        assert!(record["nnz_groups"].as_u64().is_some());
        let theta_file = record["theta_file"].as_str().unwrap();
        assert!(out.join(theta_file).exists());
    }
}

#[test]
fn additive_fit_emits_component_curves() {
    let dir = tempfile::tempdir().unwrap();
    // Two covariates on [0, 1]; the response tracks the first.
    let n = 80;
    let mut x_rows = String::new();
    let mut y_rows = String::new();
    for i in 0..n {
        let u = i as f64 / (n - 1) as f64;
        let v = ((i * 37 + 11) % n) as f64 / n as f64;
        x_rows.push_str(&format!("{u},{v}\n"));
        y_rows.push_str(&format!("{}\n", (2.0 * std::f64::consts::PI * u).sin()));
    }
    std::fs::write(dir.path().join("X.csv"), x_rows).unwrap();
    std::fs::write(dir.path().join("y.csv"), y_rows).unwrap();
    let out = dir.path().join("fit");
    let output = gl0()
        .args(["additive-fit", "--x"])
        .arg(dir.path().join("X.csv"))
        .arg("--y")
        .arg(dir.path().join("y.csv"))
        .args([
            "--degree",
            "3",
            "--knots",
            "5",
            "--form",
            "squared",
            "--lambda0",
            "0.5",
            "--lambda-smooth",
            "1e-4",
            "--out",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(out.join("gamma.csv").exists());
    assert!(out.join("component_0.csv").exists());
    assert!(out.join("component_1.csv").exists());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("selected covariates"), "{stdout}");
}

#[test]
fn input_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "1,2\n3,oops\n").unwrap();
    std::fs::write(dir.path().join("y.csv"), "1\n2\n").unwrap();
    std::fs::write(dir.path().join("groups.txt"), "0 1\n").unwrap();
    let status = gl0()
        .args(["fit", "--x"])
        .arg(dir.path().join("bad.csv"))
        .arg("--y")
        .arg(dir.path().join("y.csv"))
        .arg("--groups")
        .arg(dir.path().join("groups.txt"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn node_limit_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    gen_instance(dir.path());
    let status = gl0()
        .args(["fit-exact", "--x"])
        .arg(dir.path().join("X.csv"))
        .arg("--y")
        .arg(dir.path().join("y.csv"))
        .arg("--groups")
        .arg(dir.path().join("groups.txt"))
        .args([
            "--lambda0",
            "0.0005",
            "--gap",
            "1e-12",
            "--node-limit",
            "2",
        ])
        .status()
        .unwrap();
    // With such a tight gap and a 2-node budget the search must stop on the
    // node limit.
    assert_eq!(status.code(), Some(3));
}
