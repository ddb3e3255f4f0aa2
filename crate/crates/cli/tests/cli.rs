//! End-to-end tests of the `fplab` binary: exit codes, error JSON,
//! output-file invariants (hash and seed stamps), and rerun determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fplab")
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary launches")
}

fn error_json(output: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&output.stderr);
    serde_json::from_str(stderr.trim()).unwrap_or_else(|e| {
        panic!("stderr is not error JSON ({e}): {stderr}");
    })
}

fn summary(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("summary.json")).expect("summary.json exists");
    serde_json::from_str(&text).expect("summary.json parses")
}

#[test]
fn empty_domain_is_a_validation_error_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    let text = fs::read_to_string(config_path("evolve_bump.toml"))
        .unwrap()
        .replace("x_right = 1.0", "x_right = -1.0");
    fs::write(&config, text).unwrap();

    let out = run(&[
        "evolve",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "validation-error");
    assert_eq!(err["schema_version"], 1);
}

#[test]
fn malformed_toml_is_a_parse_error_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("garbage.toml");
    fs::write(&config, "this is not toml [[[").unwrap();

    let out = run(&["evolve", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "config-parse-error");
}

#[test]
fn unknown_expression_kind_is_rejected_at_parse_time() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("expr.toml");
    let text = fs::read_to_string(config_path("evolve_bump.toml"))
        .unwrap()
        .replace("kind = \"bump\"", "kind = \"sine\"");
    fs::write(&config, text).unwrap();

    let out = run(&["evolve", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "config-parse-error");
}

#[test]
fn kind_mismatch_between_config_and_subcommand_is_rejected() {
    let out = run(&[
        "extinction",
        "--config",
        config_path("evolve_bump.toml").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "validation-error");
    assert!(err["error"]["message"]
        .as_str()
        .unwrap()
        .contains("subcommand"));
}

#[test]
fn exhausted_stationary_budget_is_a_solver_failure_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("short.toml");
    let text = fs::read_to_string(config_path("stationary_reaction.toml"))
        .unwrap()
        .replace("t_final = 100.0", "t_final = 0.1");
    fs::write(&config, text).unwrap();

    let out = run(&[
        "stationary",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["kind"], "solver-failure");
}

#[test]
fn profile_parameters_outside_the_slow_regime_are_rejected() {
    let out = run(&[
        "selfsimilar",
        "--p",
        "1.5",
        "--s",
        "0.5",
        "--N",
        "2",
        "--mass",
        "1.0",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "validation-error");
}

#[test]
fn evolve_outputs_carry_hash_seed_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let config = config_path("evolve_bump.toml");
    let out = run(&[
        "evolve",
        "--config",
        config.to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
        "--seed",
        "11",
        "--plot",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let expected_hash: String = Sha256::digest(fs::read(&config).unwrap())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();

    let doc = summary(dir.path());
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["kind"], "evolve");
    assert_eq!(doc["seed"], 11);
    assert_eq!(doc["config_hash"], expected_hash.as_str());
    assert_eq!(doc["inputs"]["params"]["p"], 1.5);
    assert!(doc["results"]["steps"].as_u64().unwrap() >= 10);

    for name in ["trajectory.csv", "steps.csv", "final_state.csv", "plot.py"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(
            text.contains(&format!("# config_hash = {expected_hash}")),
            "{name} lacks the config hash"
        );
        assert!(text.contains("# seed = 11"), "{name} lacks the seed");
    }
}

#[test]
fn verify_inequalities_default_reports_zero_violations() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "verify-inequalities",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let doc = summary(dir.path());
    assert_eq!(doc["results"]["violations"], 0);
    assert_eq!(doc["results"]["samples"], 100_000);
}

#[test]
fn extinction_golden_config_reruns_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config = config_path("extinction_bump.toml");
    for dir in [&dir_a, &dir_b] {
        let out = run(&[
            "extinction",
            "--config",
            config.to_str().unwrap(),
            "--output-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["summary.json", "norm_trace.csv"] {
        let a = fs::read(dir_a.path().join(name)).unwrap();
        let b = fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
    let doc = summary(dir_a.path());
    assert_eq!(doc["results"]["extinct"], true);
}

#[test]
fn propagation_reports_strict_positivity_after_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "propagation",
        "--config",
        config_path("propagation_halfbump.toml").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let doc = summary(dir.path());
    assert_eq!(doc["results"]["strictly_positive"], true);
    let min = doc["results"]["min_after_first_step"].as_f64().unwrap();
    let threshold = doc["results"]["threshold"].as_f64().unwrap();
    assert!(min > threshold);
}

#[test]
fn kernel_csv_has_header_and_requested_point_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "kernel",
        "--N",
        "3",
        "--theta",
        "-1.5",
        "--sigma-grid",
        "0.01:0.99:17",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("kernel.csv")).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("sigma,kernel"));
    assert_eq!(lines.count(), 17);
}
