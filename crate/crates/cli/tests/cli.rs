use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pesin-lab"))
        .args(args)
        .env_remove("PESIN_LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn error(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

#[test]
fn list_systems_names_every_builtin() {
    let out = run(&["list-systems"]);
    assert!(out.status.success());
    let v = json(&out);
    let names: Vec<&str> = v["result"]["systems"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        [
            "zero3",
            "constant3",
            "abc",
            "cat_suspension3",
            "harmonic4",
            "coupled_quartic4"
        ]
    );
    assert_eq!(v["result"]["systems"][4]["hamiltonian"], true);
}

#[test]
fn zero_field_has_zero_exponents() {
    let out = run(&[
        "--system",
        "zero3",
        "lyapunov",
        "--samples",
        "4",
        "--t",
        "20",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["result"]["integrated_exponent"]["value"], 0.0);
    assert_eq!(
        v["result"]["mean_spectrum"],
        serde_json::json!([0.0, 0.0, 0.0])
    );
}

#[test]
fn single_orbit_spectrum_of_cat_suspension() {
    let out = run(&[
        "--system",
        "cat_suspension3",
        "lyapunov",
        "--x",
        "0.1,0.2,0.3",
        "--t",
        "100",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    let top = v["result"]["lambda_plus"].as_f64().unwrap();
    assert!((top - 0.9624).abs() < 1e-2, "{top}");
}

#[test]
fn output_is_independent_of_thread_count() {
    let args = [
        "--seed",
        "3",
        "--system",
        "abc",
        "lyapunov",
        "--samples",
        "6",
        "--t",
        "30",
    ];
    let a = run(&[&["--threads", "1"][..], &args].concat());
    let b = run(&[&["--threads", "3"][..], &args].concat());
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn unknown_system_is_a_usage_error() {
    let out = run(&["--system", "nope", "lyapunov"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error(&out);
    assert_eq!(e["error"]["kind"], "UnknownSystem");
    assert_eq!(e["error"]["exit_code"], 2);
}

#[test]
fn bad_flags_exit_with_usage_code() {
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["lyapunov", "--samples", "x"]).status.code(), Some(2));
    assert_eq!(
        run(&["--system", "abc", "lyapunov", "--x", "1,2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["suspend", "--ceiling", "const:-1"]).status.code(),
        Some(2)
    );
    assert!(run(&["--help"]).status.success());
}

#[test]
fn degenerate_splitting_is_a_numerical_failure() {
    let out = run(&["--system", "constant3", "dominate"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error(&out)["error"]["kind"], "DegenerateSplitting");
}

#[test]
fn inequality_violation_exits_with_four() {
    // depth 1 only measures the static partition, log 64, against a zero exponent
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"system": "constant3",
            "pesin": {"entropy": {"n_max": 1, "n_orbits": 100, "orbit_length": 20},
                      "resolution": [4, 4, 4], "lyapunov_samples": 2, "lyapunov_horizon": 5}}"#,
    )
    .unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "pesin-check"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(json(&out)["result"]["status"], "VIOLATION");
}

#[test]
fn config_file_round_trips_through_output() {
    let dir = tempfile::tempdir().unwrap();
    let first = run(&[
        "--seed", "4", "--system", "abc", "simulate", "--t", "1", "--record", "2",
    ]);
    assert!(first.status.success());
    let v = json(&first);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, serde_json::to_string(&v["config"]).unwrap()).unwrap();
    let second = run(&["--config", cfg.to_str().unwrap(), "simulate"]);
    assert!(second.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"sed": 1}"#).unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "list-systems"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_files_are_written_and_not_overwritten() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let args = [
        "--system", "abc", "--out", d, "--format", "both", "simulate", "--t", "1", "--record", "4",
    ];
    let out = run(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,x0,x1,x2"));
    assert_eq!(csv.lines().count(), 6);
    assert!(dir.path().join("simulate.json").exists());
    assert_eq!(run(&args).status.code(), Some(2));
    assert!(run(&[&args[..], &["--force"]].concat()).status.success());
}

#[test]
fn csv_without_directory_is_rejected() {
    let out = run(&["--format", "csv", "list-systems"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn harmonic_levels_have_zero_exponent() {
    let out = run(&[
        "--system",
        "harmonic4",
        "hamiltonian",
        "--levels",
        "1:2:2",
        "--samples",
        "4",
        "--t",
        "20",
    ]);
    assert!(out.status.success());
    let v = json(&out);
    assert!(v["result"]["integrated"]["value"].as_f64().unwrap().abs() < 1e-6);
}

#[test]
fn non_hamiltonian_system_is_refused() {
    let out = run(&["--system", "abc", "hamiltonian"]);
    assert_eq!(out.status.code(), Some(2));
}
