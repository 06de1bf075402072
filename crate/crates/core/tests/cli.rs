use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

const GOLDEN: &str = include_str!("golden/patterns_all.txt");

fn thermoevo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermoevo")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn ls_model() -> Value {
    json!({
        "family": "LordShulman",
        "coefficients": {"rho0": 1.0, "C": 1.0, "Gamma": 0.0, "nu": 1.0, "kappa": 1.0, "a0": 1.0}
    })
}

fn small_run(mode: &str) -> Value {
    json!({
        "mode": mode,
        "model": ls_model(),
        "grid": {"L": 1.0, "n_cells": 16},
        "time": {"t_max": 16.0, "dt": 1.0 / 256.0, "rho": 1.0, "scheme": "BackwardEuler"},
        "forcing": {"kind": "gaussian_pulse", "center": 1.5, "width": 0.15, "block": "h", "spatial_profile": "bump"}
    })
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn check_reports_satisfied_lord_shulman() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({"mode": "check", "model": ls_model()}));
    let o = thermoevo(&["check", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0));
    let r = stdout_json(&o);
    assert_eq!(r["verdict"], "satisfied");
    assert!(r["c_estimate"].as_f64().unwrap() > 0.0);
}

#[test]
fn check_flags_violated_dpl_with_witness() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "mode": "check",
        "model": {
            "family": "DPL_I",
            "coefficients": {"rho0": 1.0, "C": 1.0, "Gamma": 0.5, "nu": 1.0, "kappa": 1.0, "n1": 1.0, "n2": -1.0}
        }
    });
    let path = write_config(dir.path(), "c.json", &cfg);
    let out = dir.path().join("out");
    let o = thermoevo(&["check", "--config", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let r = stdout_json(&o);
    assert_eq!(r["verdict"], "violated");
    let w = &r["witnesses"][0];
    assert!(w["eigenvalue"].as_f64().unwrap() < 0.0);
    assert_eq!(fs::read(out.join("report.json")).unwrap().trim_ascii_end(), o.stdout.trim_ascii_end());
}

#[test]
fn patterns_all_matches_golden() {
    let o = thermoevo(&["patterns", "--all"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim_end(), GOLDEN.trim_end());
}

#[test]
fn unknown_keys_and_bad_input_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bogus = write_config(dir.path(), "a.json", &json!({"mode": "check", "model": ls_model(), "extra": 1}));
    let o = thermoevo(&["check", "--config", &bogus]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("extra"));

    let mut bad_coef = ls_model();
    bad_coef["coefficients"]["viscosity"] = json!(1.0);
    let p = write_config(dir.path(), "b.json", &json!({"mode": "check", "model": bad_coef}));
    assert_eq!(thermoevo(&["check", "--config", &p]).status.code(), Some(1));

    let p = write_config(dir.path(), "c.json", &json!({"mode": "verify", "model": ls_model()}));
    assert_eq!(thermoevo(&["check", "--config", &p]).status.code(), Some(1));

    let missing = dir.path().join("missing.json");
    assert_eq!(thermoevo(&["check", "--config", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn simulate_writes_csvs_and_manifest_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.json", &small_run("simulate"));
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = thermoevo(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
            out
        })
        .collect();

    let mut names: Vec<_> = fs::read_dir(&runs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for f in ["v.csv", "sigma.csv", "theta.csv", "q.csv", "manifest.json"] {
        assert!(names.iter().any(|n| n == f), "missing {f}");
    }
    for n in &names {
        assert_eq!(fs::read(runs[0].join(n)).unwrap(), fs::read(runs[1].join(n)).unwrap(), "{n:?} differs");
    }

    let manifest: Value = serde_json::from_slice(&fs::read(runs[0].join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["verdict"], "satisfied");
    assert_eq!(manifest["steps"], 16 * 256);

    let theta = fs::read_to_string(runs[0].join("theta.csv")).unwrap();
    let header = theta.lines().next().unwrap();
    assert!(header.starts_with("t,x_"));
    assert_eq!(header.split(',').count(), 1 + 15);
    assert_eq!(theta.lines().count(), 1 + 16 * 256 + 1);
}

#[test]
fn verify_passes_on_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = small_run("verify");
    run["time"]["dt"] = json!(1.0 / 1024.0);
    let cfg = write_config(dir.path(), "v.json", &run);
    let out = dir.path().join("out");
    let o = thermoevo(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let cmp: Value = serde_json::from_slice(&fs::read(out.join("comparison.json")).unwrap()).unwrap();
    assert!(cmp["overall"].as_f64().unwrap() <= 1e-2);
    assert!(out.join("verify.json").exists());
}

#[test]
fn verify_reports_tolerance_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = small_run("verify");
    run["time"]["dt"] = json!(1.0 / 16.0);
    run["tolerances"] = json!({"oracle_error": 1e-6});
    let cfg = write_config(dir.path(), "v.json", &run);
    let out = dir.path().join("out");
    let o = thermoevo(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}
