//! End-to-end tests driving the `collider` binary on fixture configs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn collider(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_collider"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let mut args = vec!["run".to_string(), fixture(config).display().to_string()];
    args.push("--out".into());
    args.push(dir.display().to_string());
    args.extend(extra.iter().map(|s| s.to_string()));
    Command::new(env!("CARGO_BIN_EXE_collider"))
        .args(&args)
        .output()
        .expect("binary runs")
}

#[test]
fn validate_accepts_good_config() {
    let out = collider(&["validate", fixture("damping_extract.json").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn validate_rejects_negative_gamma_with_exit_2() {
    let out = collider(&["validate", fixture("bad_gamma.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gamma"), "stderr: {err}");
}

#[test]
fn run_rejects_invalid_config_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "bad_gamma.json", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("summary.json").exists());
}

#[test]
fn extract_run_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "damping_extract.json", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("fitted_order_low PASS"), "{stdout}");

    let csv_path = dir.path().join("extraction.csv");
    let first = std::fs::read(&csv_path).unwrap();
    assert!(first.starts_with(b"dt,frobenius_deviation,trace_defect,min_choi_eig"));

    // Byte-identical on a re-run.
    let out = run_in(dir.path(), "damping_extract.json", &[]);
    assert!(out.status.success());
    let second = std::fs::read(&csv_path).unwrap();
    assert_eq!(first, second);

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "extract");
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn appendix_a_emits_lamb_shift_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "appendix_a.json", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("appendix_a.json")).unwrap())
            .unwrap();
    // H_LS = (sigma_1^- sigma_2^+ - sigma_1^+ sigma_2^-) / (2i): the only
    // nonzero entries are (1,2) and (2,1), purely imaginary, magnitude 1/2.
    let im = doc["h_ls"]["im"].as_array().unwrap();
    let re = doc["h_ls"]["re"].as_array().unwrap();
    let at = |m: &[serde_json::Value], r: usize, c: usize| m[r].as_array().unwrap()[c].as_f64().unwrap();
    assert!((at(im, 1, 2) + 0.5).abs() < 1e-9);
    assert!((at(im, 2, 1) - 0.5).abs() < 1e-9);
    for r in 0..4 {
        for c in 0..4 {
            assert!(at(re, r, c).abs() < 1e-9);
            if !((r == 1 && c == 2) || (r == 2 && c == 1)) {
                assert!(at(im, r, c).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn appendix_b_reports_decay() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "appendix_b.json", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    let exponent = summary["details"]["fitted_decay_exponent"].as_f64().unwrap();
    assert!(exponent > 0.0, "decay exponent {exponent}");
    assert!(dir.path().join("scaling.csv").exists());
}

#[test]
fn splitting_and_trajectory_pass() {
    for config in ["splitting.json", "trajectory.json"] {
        let dir = tempfile::tempdir().unwrap();
        let out = run_in(dir.path(), config, &[]);
        assert!(
            out.status.success(),
            "{config}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn seeded_random_target_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "mcm_random.json", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn squeezed_example_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "squeezed.json", &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("trace_formula_matches_closed_forms PASS"), "{stdout}");
    assert!(stdout.contains("extracted_matches_predicted PASS"), "{stdout}");
}

#[test]
fn tol_scale_can_force_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "damping_extract.json", &["--tol-scale", "1e-16"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn batch_mode_isolates_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_collider"))
        .args([
            "run",
            fixture("damping_extract.json").to_str().unwrap(),
            fixture("splitting.json").to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("damping_extract/summary.json").exists());
    assert!(dir.path().join("splitting/summary.json").exists());
}

#[test]
fn export_mcm_brick_is_palindromic() {
    let out = collider(&[
        "export",
        fixture("mcm_brick.json").to_str().unwrap(),
        "--dt",
        "0.01",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let stages = doc["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 3);
    let targets: Vec<Vec<String>> = stages
        .iter()
        .map(|s| {
            s["targets"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| t.as_str().unwrap().to_string())
                .collect()
        })
        .collect();
    assert_eq!(targets[0], vec!["s0", "a0"]);
    assert_eq!(targets[1], vec!["s1", "a0"]);
    assert_eq!(targets[2], vec!["s0", "a0"]);
}

#[test]
fn export_cascade_four_sites_in_order() {
    let out = collider(&[
        "export",
        fixture("cascade4.json").to_str().unwrap(),
        "--dt",
        "0.01",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let stages = doc["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 4);
    for (m, stage) in stages.iter().enumerate() {
        let targets = stage["targets"].as_array().unwrap();
        assert_eq!(targets[0].as_str().unwrap(), format!("s{m}"));
        assert_eq!(targets[1].as_str().unwrap(), "a0");
    }
}

#[test]
fn export_entangled_begins_with_entangling_stage() {
    let out = collider(&[
        "export",
        fixture("appendix_b.json").to_str().unwrap(),
        "--dt",
        "0.01",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let stages = doc["stages"].as_array().unwrap();
    let first_targets: Vec<&str> = stages[0]["targets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t.as_str().unwrap())
        .collect();
    assert_eq!(first_targets, vec!["a0", "a1"]);
}
