//! End-to-end smoke tests of the `catqec` binary: every subcommand, the
//! archive layout, thread-count determinism, and the error contract
//! (diagnostic JSON on stderr, nonzero exit).

use std::io::Write;
use std::process::{Command, Output, Stdio};

fn catqec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_catqec"))
}

fn run(args: &[&str]) -> Output {
    catqec().args(args).output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

/// Failing commands print a single-line JSON object to stderr; return its
/// `error` message.
fn error_message(out: &Output) -> String {
    assert!(!out.status.success(), "expected a failure, got: {}", stdout_of(out));
    let line = stderr_of(out);
    let parsed: serde_json::Value =
        serde_json::from_str(line.trim()).unwrap_or_else(|e| panic!("stderr not JSON ({e}): {line}"));
    parsed["error"].as_str().expect("error field").to_string()
}

#[test]
fn run_qec_writes_the_archive_and_is_thread_count_invariant() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = dir.path().join("sweep.cfg");
    std::fs::write(&cfg, "shots = 40\ntimes = 5, 20, 40, 60\nmonitor = steps:2\n")
        .expect("config written");
    let cfg = cfg.to_str().expect("utf-8 path");

    let out_a = dir.path().join("a");
    let first = run(&[
        "run-qec",
        "--config",
        cfg,
        "--seed",
        "7",
        "--out",
        out_a.to_str().expect("utf-8 path"),
        "--threads",
        "1",
    ]);
    assert!(first.status.success(), "stderr: {}", stderr_of(&first));
    let text = stdout_of(&first);
    for scheme in ["transmon", "fock", "uncorrected-cat", "corrected-cat", "postselected-cat"] {
        assert!(text.contains(scheme), "missing {scheme} in: {text}");
        assert!(
            out_a.join(format!("{scheme}.decay.csv")).is_file(),
            "missing {scheme} decay curve"
        );
    }
    assert!(text.contains("tau =") && text.contains("wrote "), "unexpected stdout: {text}");

    let archive = std::fs::read_to_string(out_a.join("archive.json")).expect("archive");
    let parsed: serde_json::Value = serde_json::from_str(&archive).expect("valid JSON");
    assert_eq!(parsed["seed"], 7);
    assert_eq!(parsed["schemes"].as_array().expect("schemes").len(), 5);

    // Same config and seed on a different thread count: bit-identical bytes.
    let second = run(&[
        "run-qec",
        "--config",
        cfg,
        "--seed",
        "7",
        "--out",
        out_a.to_str().expect("utf-8 path"),
        "--threads",
        "4",
    ]);
    assert!(second.status.success(), "stderr: {}", stderr_of(&second));
    let replay = std::fs::read_to_string(out_a.join("archive.json")).expect("archive");
    assert_eq!(archive, replay, "archives differ across thread counts");
}

#[test]
fn run_qec_honors_the_output_dir_env_var() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = catqec()
        .args(["run-qec", "--seed", "3", "--shots", "10"])
        .env("CATQEC_OUTPUT_DIR", dir.path())
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    assert!(dir.path().join("archive.json").is_file());
}

#[test]
fn optimize_prints_cadence_rows() {
    let out = run(&["optimize", "--times", "60,110", "--nbar0", "2"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "t_total,s,t_w_mean,lambda_per_step,f_total,f_t,f_kd,f_gamma_up,f_ed,schedule"
    );
    assert_eq!(lines.len(), 3);
    assert!(
        lines[2].starts_with("110.000000,6,"),
        "expected the 110 µs optimum at 6 steps: {}",
        lines[2]
    );
}

#[test]
fn bayes_prints_a_normalized_table() {
    let out = run(&["bayes", "--steps", "3", "--t-w", "13.8", "--nbar0", "3"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bits,probability,conditional_success"));
    let mut total = 0.0;
    let mut rows = 0;
    for line in lines {
        let prob: f64 = line.split(',').nth(1).expect("probability").parse().expect("number");
        total += prob;
        rows += 1;
    }
    assert_eq!(rows, 8);
    assert!((total - 1.0).abs() < 1e-9, "probabilities sum to {total}");
}

#[test]
fn budget_warns_when_forward_propagation_is_below_break_even() {
    let out = run(&["budget", "--t-m", "1,21", "--nbar", "2"]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t_m,nbar,regime,g_2eps,g_up_s,g_readout,g_up_a,g_kerr,g_fp,tau_f01");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,2,fast,"));
    assert!(lines[2].starts_with("21,2,optimized,"));
    let warning = stderr_of(&out);
    assert!(
        warning.contains("below break-even at t_M = 1"),
        "missing warning: {warning}"
    );
    assert!(!warning.contains("t_M = 21"), "unexpected warning: {warning}");
}

#[test]
fn wigner_grid_has_the_vacuum_peak_at_the_origin() {
    let out = run(&[
        "wigner",
        "--state",
        "vacuum",
        "--half-width",
        "1.2",
        "--points",
        "3",
        "--dim",
        "16",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "re_beta,im_beta,w");
    assert_eq!(lines.len(), 10);
    let center = lines
        .iter()
        .find(|l| l.starts_with("0.000000,0.000000,"))
        .expect("origin row");
    let w: f64 = center.split(',').nth(2).expect("value").parse().expect("number");
    assert!((w - 2.0 / std::f64::consts::PI).abs() < 1e-9, "vacuum peak {w}");
}

#[test]
fn tomo_fits_a_curve_from_stdin() {
    let mut rows = String::from("t,fidelity\n");
    for k in 1..=12 {
        let t = 5.0 * k as f64;
        rows.push_str(&format!("{t},{}\n", 0.25 + 0.75 * (-t / 42.0_f64).exp()));
    }
    let mut child = catqec()
        .args(["tomo", "--input", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child
        .stdin
        .take()
        .expect("stdin")
        .write_all(rows.as_bytes())
        .expect("curve piped");
    let out = child.wait_with_output().expect("binary exits");
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let fit: serde_json::Value = serde_json::from_str(&stdout_of(&out)).expect("fit JSON");
    let tau = fit["tau"].as_f64().expect("tau");
    assert!((tau - 42.0).abs() / 42.0 < 0.01, "tau = {tau}");
}

#[test]
fn unknown_config_keys_are_named_in_the_diagnostic() {
    let dir = tempfile::tempdir().expect("tempdir");
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "shotz = 10\n").expect("config written");
    let out = run(&["run-qec", "--config", cfg.to_str().expect("utf-8 path"), "--seed", "1"]);
    let message = error_message(&out);
    assert!(message.contains("shotz"), "diagnostic does not name the key: {message}");
}

#[test]
fn archive_runs_require_an_explicit_seed() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = catqec()
        .args(["run-qec", "--shots", "10"])
        .env("CATQEC_OUTPUT_DIR", dir.path())
        .output()
        .expect("binary runs");
    let message = error_message(&out);
    assert!(message.contains("seed"), "diagnostic does not mention the seed: {message}");
}

#[test]
fn tomo_cat_model_requires_the_photon_number() {
    let mut child = catqec()
        .args(["tomo", "--input", "-", "--model", "cat"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    drop(child.stdin.take());
    let out = child.wait_with_output().expect("binary exits");
    let message = error_message(&out);
    assert!(message.contains("nbar0"), "diagnostic does not mention nbar0: {message}");
}

#[test]
fn wigner_rejects_grids_outside_the_validity_disk() {
    let out = run(&["wigner", "--state", "coherent:5", "--half-width", "3", "--dim", "10"]);
    let message = error_message(&out);
    assert!(
        message.contains("truncation") || message.contains("amplitude") || message.contains("dim"),
        "unexpected diagnostic: {message}"
    );
}
