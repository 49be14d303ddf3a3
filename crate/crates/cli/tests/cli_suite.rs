//! End-to-end runs of the przk binary: exit codes, report shape,
//! determinism, and the solution CSV.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn przk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_przk"))
        .args(args)
        .output()
        .expect("running przk")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn tmp(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn verify_passes_on_a_builtin() {
    let out = przk(&["verify", "--manifold", "h4", "--samples", "40", "--seed", "7", "--tol", "1e-9"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("overall: PASS"), "summary:\n{text}");
    for check in ["prz", "einstein", "weyl-sd", "phi", "scalar", "lax", "laplacian"] {
        assert!(text.contains(check), "missing check `{check}`:\n{text}");
    }
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(exit_code(&przk(&["verify", "--bogus"])), 2);
    assert_eq!(exit_code(&przk(&["nonsense"])), 2);
}

#[test]
fn unreadable_or_invalid_manifest_files_are_load_errors() {
    assert_eq!(exit_code(&przk(&["verify", "--manifold", "file:/does/not/exist.json"])), 2);

    let path = tmp("zero-lambda.json");
    std::fs::write(
        &path,
        r#"{"name":"zero","lambda":0.0,"eps":1.0,"K":"w*wb",
           "domain":{"w_re":[0.2,0.5],"w_im":[-0.2,0.2],"z_re":[-0.4,0.4],"z_im":[-0.4,0.4]},
           "reality":true}"#,
    )
    .unwrap();
    let spec = format!("file:{}", path.display());
    let out = przk(&["verify", "--manifold", &spec]);
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonzero"));
}

#[test]
fn conflicting_solve_targets_are_usage_errors() {
    assert_eq!(exit_code(&przk(&["solve", "--family", "h4", "--manifold", "s4"])), 2);
}

#[test]
fn reports_are_deterministic_apart_from_wall_time() {
    let stripped = |path: &Path| -> String {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .filter(|l| !l.contains("wall_time_s"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let (a, b, c) = (tmp("det-a.json"), tmp("det-b.json"), tmp("det-c.json"));
    let run = |path: &Path, jobs: &str| {
        let out = przk(&[
            "verify", "--manifold", "s4", "--samples", "30", "--seed", "11",
            "--jobs", jobs, "--out", path.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0);
    };
    run(&a, "1");
    run(&b, "1");
    run(&c, "3");
    assert_eq!(stripped(&a), stripped(&b), "same argv must reproduce the report");
    assert_eq!(stripped(&a), stripped(&c), "--jobs must not change any measured value");
}

#[test]
fn solve_writes_the_solution_grid_as_csv() {
    let json = tmp("solve-h4.json");
    let out = przk(&["solve", "--family", "h4", "--grid", "9", "--out", json.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(tmp("solve-h4.csv")).expect("solution csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "rho,sigma,K");
    assert_eq!(lines.len(), 1 + 9 * 9);
    for line in &lines[1..] {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 3);
        assert!(fields.iter().all(|v| v.is_finite()));
    }

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));
    assert!(report["newton"]["iterations"].as_u64().is_some());
}

#[test]
fn report_json_carries_the_shared_schema() {
    let path = tmp("shape.json");
    let out = przk(&[
        "lax", "--manifold", "cp2", "--samples", "15", "--out", path.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report["command"], "lax");
    assert_eq!(report["spec"], "cp2");
    assert_eq!(report["seed"].as_u64(), Some(7));
    assert!(report["wall_time_s"].as_f64().is_some());
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 3);
    for check in checks {
        assert!(check["name"].as_str().is_some());
        assert!(check["max_residual"].as_f64().is_some());
        assert!(check["tolerance"].as_f64().is_some());
        assert_eq!(check["pass"], serde_json::Value::Bool(true));
    }
    // The perturbed-commutator check is a visibility floor: measured above
    // tolerance, and still passing.
    let perturbed = checks.iter().find(|c| c["name"] == "lax-perturbed").unwrap();
    assert!(perturbed["max_residual"].as_f64() > perturbed["tolerance"].as_f64());
}

#[test]
fn failing_checks_are_named_on_stdout() {
    let path = tmp("bad-k.json");
    std::fs::write(
        &path,
        r#"{"name":"bad","lambda":1.0,"eps":1.0,"K":"w*wb",
           "domain":{"w_re":[0.2,0.5],"w_im":[-0.2,0.2],"z_re":[-0.4,0.4],"z_im":[-0.4,0.4]},
           "reality":true}"#,
    )
    .unwrap();
    let spec = format!("file:{}", path.display());
    let out = przk(&["verify", "--manifold", &spec, "--samples", "10"]);
    assert_eq!(exit_code(&out), 1);
    let text = stdout(&out);
    assert!(text.contains("overall: FAIL"), "summary:\n{text}");
    assert!(text.contains("prz"), "failing check not named:\n{text}");
}
