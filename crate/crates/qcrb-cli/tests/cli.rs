use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn qcrb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcrb")).args(args).env_remove("QCRB_SEED").env_remove("QCRB_JOBS").output().unwrap()
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn value_of(v: &Value, kind: &str) -> f64 {
    v["reports"].as_array().unwrap().iter().find(|r| r["kind"] == kind).unwrap()["value"].as_f64().unwrap()
}

#[test]
fn bound_maximally_mixed_qutrit() {
    let out = qcrb(&["--json", "bound", "--model", "gmm", "--d", "3"]);
    assert!(out.status.success());
    let v = json_of(&out);
    assert!((value_of(&v, "HCRB") - 8.0 / 3.0).abs() < 1e-6);
    assert!((value_of(&v, "NHCRB") - 32.0 / 3.0).abs() < 1e-6);
    assert!((v["ratio_nh"].as_f64().unwrap() - 4.0).abs() < 1e-6);
}

#[test]
fn bound_human_output_has_six_digits() {
    let out = qcrb(&["bound", "--model", "gmm", "--d", "2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("NHCRB        4.50000"), "{text}");
}

#[test]
fn subset_labels_are_one_based() {
    let out = qcrb(&["--json", "bound", "--model", "gmm-subset", "--d", "3", "--k", "1,2"]);
    assert!(out.status.success());
    assert_eq!(json_of(&out)["n"], 2);
    let out = qcrb(&["bound", "--model", "gmm-subset", "--d", "3", "--k", "0,1"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn singular_state_skips_inverse_bounds() {
    let out = qcrb(&["--json", "bound", "--model", "rho-min", "--d", "3", "--p", "0.5", "--eps", "0"]);
    // Bounds that need ρ⁻¹ are skipped with a note; an exactly singular state
    // can also defeat the interior-point solver, which is a clean exit 2.
    match out.status.code() {
        Some(0) => {
            let v = json_of(&out);
            assert!(!v["notes"].as_array().unwrap().is_empty());
        }
        Some(2) | Some(3) => assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:")),
        c => panic!("unexpected exit {c:?}"),
    }
    let out = qcrb(&["--json", "bound", "--model", "rho-min", "--d", "3", "--p", "0.5"]);
    assert!(out.status.success());
}

#[test]
fn invalid_model_file_exits_3() {
    let dir = scratch("bad-model");
    let p = dir.join("m.json");
    std::fs::write(&p, r#"{"d": 2, "rho": [[1, 0], [0, 0.5]]}"#).unwrap();
    let out = qcrb(&["bound", "--model-file", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn theta_broadcast_and_length_check() {
    assert!(qcrb(&["bound", "--model", "gmm", "--d", "2", "--theta", "0.1"]).status.success());
    assert_eq!(qcrb(&["bound", "--model", "gmm", "--d", "2", "--theta", "0.1,0.2"]).status.code(), Some(3));
}

#[test]
fn verify_suites() {
    for suite in ["gmm-identities", "mm-certificates", "sic"] {
        let out = qcrb(&["verify", "--suite", suite, "--d", "2..3"]);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(out.status.success(), "{suite}: {text}");
        assert!(text.lines().all(|l| l.starts_with("PASS")));
    }
}

#[test]
fn xsol_suite_reports_value_agreement() {
    let out = qcrb(&["--json", "verify", "--suite", "xsol", "--d", "2"]);
    let v = json_of(&out);
    let detail = &v["checks"][0]["detail"];
    assert!(detail["value_residual"].as_f64().unwrap() < 1e-10);
    assert!(detail["estimator_residual"].as_f64().unwrap() < 1e-10);
    assert_eq!(out.status.success(), v["passed"].as_bool().unwrap());
}

#[test]
fn experiment_writes_and_resumes() {
    let dir = scratch("resume");
    let d = dir.to_str().unwrap();
    let args = ["--json", "experiment", "purity-sweep", "--d", "2", "--samples", "6", "--no-extremal", "--seed", "5", "--out", d];
    let out = qcrb(&args);
    assert!(out.status.success());
    let m1 = json_of(&out);
    assert_eq!(m1["records"], 6);
    assert_eq!(m1["complete"], true);
    let csv = std::fs::read_to_string(dir.join("purity-sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    let stamp = std::fs::metadata(dir.join("purity-sweep.csv")).unwrap().modified().unwrap();

    // Same configuration: skipped, manifest unchanged.
    let m2 = json_of(&qcrb(&args));
    assert_eq!(m1["content_hash"], m2["content_hash"]);
    assert_eq!(std::fs::metadata(dir.join("purity-sweep.csv")).unwrap().modified().unwrap(), stamp);

    // Different seed: rerun with a different dataset.
    let mut a3 = args.to_vec();
    a3[9] = "6";
    let m3 = json_of(&qcrb(&a3));
    assert_ne!(m1["config_hash"], m3["config_hash"]);
    assert_ne!(m1["content_hash"], m3["content_hash"]);
}

#[test]
fn experiment_is_deterministic_across_jobs() {
    let a = scratch("jobs1");
    let b = scratch("jobs2");
    for (dir, jobs) in [(&a, "1"), (&b, "2")] {
        let out = qcrb(&[
            "experiment", "purity-sweep", "--d", "2", "--samples", "8", "--no-extremal", "--jobs", jobs, "--out", dir.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let ca = std::fs::read_to_string(a.join("purity-sweep.csv")).unwrap();
    let cb = std::fs::read_to_string(b.join("purity-sweep.csv")).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn seed_from_environment() {
    let dir = scratch("env-seed");
    let out = Command::new(env!("CARGO_BIN_EXE_qcrb"))
        .args(["--json", "experiment", "weighted", "--d", "2", "--samples", "2", "--out", dir.to_str().unwrap()])
        .env("QCRB_SEED", "42")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(json_of(&out)["seed"], 42);
}

#[test]
fn config_file_mirrors_flags() {
    let dir = scratch("config");
    let cfg = dir.join("c.json");
    std::fs::write(&cfg, r#"{"command": "bound", "model": "rho-max", "d": 3, "p": 0.3}"#).unwrap();
    let c = cfg.to_str().unwrap();
    let v = json_of(&qcrb(&["--json", "--config", c]));
    assert_eq!(v["d"], 3);
    assert!((v["purity"].as_f64().unwrap() - (1.0 + 2.0 * 0.09) / 3.0).abs() < 1e-12);
    // Flags on the command line win over the file.
    let v = json_of(&qcrb(&["--json", "--config", c, "bound", "--d", "2"]));
    assert_eq!(v["d"], 2);
}

#[test]
fn povm_opt_reaches_mm_bound() {
    let dir = scratch("povm");
    let out = qcrb(&["--json", "experiment", "povm-opt", "--d", "2", "--restarts", "2", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let v = json_of(&out);
    assert!((v["summary"]["trace_crb"].as_f64().unwrap() - 4.5).abs() < 1e-6);
    assert!(dir.join("povm-opt.povm.json").exists());
}
