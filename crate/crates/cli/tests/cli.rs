//! End-to-end runs of the `otar` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn otar() -> Command {
    Command::new(env!("CARGO_BIN_EXE_otar"))
}

fn run_ok(cmd: &mut Command) -> Value {
    let out = cmd.output().expect("spawn otar");
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    serde_json::from_str(text.trim()).unwrap_or(Value::Null)
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {path:?}: {e}"))
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    for stem in ["a", "b"] {
        run_ok(otar().args([
            "simulate",
            "--alpha",
            "0.5",
            "--s",
            "zeta:-2",
            "--steps",
            "40",
            "--burn-in",
            "10",
            "--seed",
            "7",
            "--grid",
            "200",
            "--out",
        ])
        .arg(dir.path().join(stem)));
    }
    assert_eq!(
        read(&dir.path().join("a.csv")),
        read(&dir.path().join("b.csv"))
    );
    // The headers embed their own CSV filename; everything else must match.
    let strip = |stem: &str| -> Value {
        let mut v: Value =
            serde_json::from_slice(&read(&dir.path().join(format!("{stem}.json")))).unwrap();
        v.as_object_mut().unwrap().remove("csv");
        v
    };
    assert_eq!(strip("a"), strip("b"));
}

#[test]
fn war_seed_env_overrides_seed_flag() {
    let dir = TempDir::new().unwrap();
    let base = [
        "simulate", "--alpha", "0.3", "--s", "zeta:2", "--steps", "20", "--burn-in", "0",
        "--grid", "100", "--out",
    ];
    run_ok(otar()
        .args(base)
        .arg(dir.path().join("flag"))
        .args(["--seed", "2"]));
    run_ok(otar()
        .args(base)
        .arg(dir.path().join("env"))
        .args(["--seed", "1"])
        .env("WAR_SEED", "2"));
    assert_eq!(
        read(&dir.path().join("flag.csv")),
        read(&dir.path().join("env.csv"))
    );
}

#[test]
fn fit_recovers_alpha_from_noiseless_simulation() {
    let dir = TempDir::new().unwrap();
    let stem = dir.path().join("chain");
    run_ok(otar()
        .args([
            "simulate", "--alpha", "0.5", "--s", "zeta:-2", "--noise", "none", "--steps",
            "200", "--burn-in", "0", "--grid", "500", "--out",
        ])
        .arg(&stem));
    let fit_out = dir.path().join("fit");
    let report = run_ok(otar()
        .args(["fit", "--input"])
        .arg(&stem)
        .args(["--out"])
        .arg(&fit_out));
    let alpha_hat = report["alpha_hat"].as_f64().unwrap();
    assert!((alpha_hat - 0.5).abs() <= 1e-3, "alpha_hat {alpha_hat}");
    assert!(fit_out.with_extension("json").exists());
    assert!(dir.path().join("fit_s_hat.csv").exists());
    assert!(dir.path().join("fit_profile.csv").exists());
}

#[test]
fn transform_invert_twice_returns_original() {
    let dir = TempDir::new().unwrap();
    let inv = dir.path().join("inv.csv");
    let back = dir.path().join("back.csv");
    run_ok(otar()
        .args(["transform", "--op", "invert", "--a", "zeta:3", "--grid", "200", "--out"])
        .arg(&inv));
    run_ok(otar()
        .args(["transform", "--op", "invert", "--grid", "200", "--a"])
        .arg(&inv)
        .arg("--out")
        .arg(&back));
    let report = run_ok(otar()
        .args(["transform", "--op", "lp-distance", "--grid", "200", "--a", "zeta:3", "--b"])
        .arg(&back));
    let d = report["value"].as_f64().unwrap();
    assert!(d <= 2.0 / 200.0, "distance {d}");
}

#[test]
fn check_reports_stationarity_verdict() {
    let out = otar()
        .args(["check", "--alpha", "0.3", "--s", "id", "--grid", "100"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["satisfied"], Value::Bool(true));

    let out = otar()
        .args(["check", "--alpha", "0.95", "--s", "steps", "--grid", "100"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["satisfied"], Value::Bool(false));
}

#[test]
fn ingest_then_compare_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("samples.csv");
    let mut text = String::from("period,value\n");
    // Three periods of noisy uniform-ish samples on [0, 10].
    let mut state = 42u64;
    let mut next = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for period in ["2001", "2002", "2003", "2004"] {
        for _ in 0..50 {
            text.push_str(&format!("{period},{:.6}\n", 10.0 * next()));
        }
    }
    std::fs::write(&csv, text).unwrap();

    let stem = dir.path().join("curves");
    let report = run_ok(otar()
        .args(["ingest", "--input"])
        .arg(&csv)
        .args(["--grid", "100", "--out"])
        .arg(&stem));
    assert_eq!(report["periods"], Value::from(4));
    assert_eq!(report["dropped"], Value::from(0));

    let cmp = run_ok(otar().args(["compare", "--grid-step", "0.05", "--curves"]).arg(&stem));
    assert!(cmp["verdict"].is_string());
    assert!(cmp["bridging_gap_rel"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn alpha_zero_noiseless_chain_is_constant_and_flagged_flat() {
    let dir = TempDir::new().unwrap();
    let stem = dir.path().join("const");
    run_ok(otar()
        .args([
            "simulate", "--alpha", "0", "--s", "zeta:2", "--noise", "none", "--steps", "10",
            "--burn-in", "2", "--grid", "100", "--out",
        ])
        .arg(&stem));
    let text = String::from_utf8(read(&dir.path().join("const.csv"))).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|&r| r == rows[0]), "chain is not constant");

    // contract-about dispatch: the averaged map is exact and the objective
    // carries no information about alpha.
    let report = run_ok(otar()
        .args(["fit", "--system", "contract-about", "--input"])
        .arg(&stem)
        .args(["--out"])
        .arg(dir.path().join("fit")));
    assert_eq!(report["alpha_hat"].as_f64().unwrap(), 0.0);
    assert_eq!(report["flags"]["flat_objective"], Value::Bool(true));
}

#[test]
fn fit_reads_curve_series_through_a_model() {
    let dir = TempDir::new().unwrap();
    let stem = dir.path().join("chain");
    run_ok(otar()
        .args([
            "simulate", "--alpha", "0.5", "--s", "zeta:-2", "--noise", "none", "--steps",
            "120", "--burn-in", "0", "--grid", "500", "--distributions", "uniform-quantile",
            "--out",
        ])
        .arg(&stem));
    let report = run_ok(otar()
        .args(["fit", "--model", "uniform-quantile", "--curves"])
        .arg(dir.path().join("chain_curves"))
        .args(["--out"])
        .arg(dir.path().join("fit")));
    let alpha_hat = report["alpha_hat"].as_f64().unwrap();
    assert!((alpha_hat - 0.5).abs() <= 1e-3, "alpha_hat {alpha_hat}");
}

#[test]
fn config_errors_exit_2_with_json_stderr() {
    let check = |out: Output| {
        assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
        let err: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["code"], Value::from(2));
        assert!(err["error"].is_string());
    };
    // Burn-in consumes the whole chain.
    check(
        otar()
            .args([
                "simulate", "--alpha", "0.5", "--steps", "10", "--burn-in", "10", "--grid",
                "100", "--out", "/tmp/unused",
            ])
            .output()
            .unwrap(),
    );
    // Unknown map source.
    check(
        otar()
            .args(["check", "--alpha", "0.1", "--s", "no-such-map", "--grid", "100"])
            .output()
            .unwrap(),
    );
    // Bad WAR_SEED value.
    check(
        otar()
            .args([
                "simulate", "--alpha", "0.1", "--steps", "5", "--burn-in", "0", "--grid",
                "50", "--out", "/tmp/unused",
            ])
            .env("WAR_SEED", "not-a-number")
            .output()
            .unwrap(),
    );
}

#[test]
fn numeric_domain_errors_exit_3() {
    let out = otar()
        .args([
            "transform", "--op", "contract", "--a", "zeta:2", "--alpha", "1.5", "--grid",
            "100", "--out", "/tmp/unused.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], Value::from(3));
}

#[test]
fn threads_flag_is_accepted() {
    let dir = TempDir::new().unwrap();
    run_ok(otar()
        .args([
            "--threads", "2", "simulate", "--alpha", "0.2", "--steps", "10", "--burn-in",
            "0", "--grid", "50", "--out",
        ])
        .arg(dir.path().join("t")));
}
