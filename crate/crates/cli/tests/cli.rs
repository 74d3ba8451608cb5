use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn smallgain(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smallgain"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn input(name: &str) -> String {
    config(name).to_string_lossy().into_owned()
}

#[test]
fn check_sg_holds_for_the_delay_network() {
    let tmp = tempfile::tempdir().unwrap();
    let out = smallgain(&["check-sg", "--input", &input("delay_network_check.json")], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(tmp.path());
    assert_eq!(r["holds"], true);
    assert_eq!(r["cycles"].as_array().unwrap().len(), 8);
    assert!(tmp.path().join("effective_config.json").exists());
    assert!(tmp.path().join("run_meta.json").exists());
}

#[test]
fn unit_two_cycle_is_refuted_with_a_witness() {
    let tmp = tempfile::tempdir().unwrap();
    let out = smallgain(&["check-sg", "--input", &input("unit_two_cycle.json")], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let r = report(tmp.path());
    assert_eq!(r["holds"], false);
    assert_eq!(r["failing_cycle"]["nodes"], serde_json::json!([1, 2]));
    let w: Vec<f64> = serde_json::from_value(r["witness_vector"].clone()).unwrap();
    assert!(w.iter().any(|v| *v > 0.0));
}

#[test]
fn repro_example52_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = smallgain(&["repro", "example52"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(report(tmp.path())["passed"], true);
    let csv = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,x3\n"));
}

#[test]
fn repro_rk4_order_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = smallgain(&["repro", "rk4-order"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn unknown_recipe_lists_the_known_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let out = smallgain(&["repro", "example99"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["example51", "example52", "prop27-sweep", "rk4-order"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn reports_are_byte_identical_across_job_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = input("scalar_iss_validate.json");
    let ra = smallgain(&["validate", "--input", &cfg, "--seed", "5", "--jobs", "1"], a.path());
    let rb = smallgain(&["validate", "--input", &cfg, "--seed", "5", "--jobs", "3"], b.path());
    assert_eq!(ra.status.code(), Some(0));
    assert_eq!(rb.status.code(), Some(0));
    for f in ["report.json", "effective_config.json", "trajectory.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_override_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    smallgain(
        &["iterate", "--input", &input("iterate_three_cycle.json"), "--seed", "77"],
        tmp.path(),
    );
    let eff: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(eff["analysis"]["seed"], 77);
    assert_eq!(eff["analysis"]["samples"], 100_000);
}

#[test]
fn existing_outputs_need_force() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["check-sg", "--input", &input("delay_network_check.json")];
    assert_eq!(smallgain(&args, tmp.path()).status.code(), Some(0));
    let again = smallgain(&args, tmp.path());
    assert_eq!(again.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(smallgain(&forced, tmp.path()).status.code(), Some(0));
}

#[test]
fn schema_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"analysis\": {\n    \"dt\": \"small\"\n  }\n}\n").unwrap();
    let out = smallgain(&["simulate", "--input", bad.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("analysis.dt") && err.contains("line 3"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn sampled_simulation_writes_sampling_times() {
    let tmp = tempfile::tempdir().unwrap();
    let out = smallgain(
        &["simulate", "--input", &input("sampled_double_integrator.json")],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let taus = std::fs::read_to_string(tmp.path().join("sampling_times.csv")).unwrap();
    let values: Vec<f64> = taus.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(values[..5], [0.0, 0.25, 0.5, 0.75, 1.0]);
}

#[test]
fn synth_writes_the_gain_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = smallgain(&["synth", "--input", &input("synth_two_node.json")], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let table = std::fs::read_to_string(tmp.path().join("gain_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 122);
    assert!(report(tmp.path())["theta"].is_object());
}

#[test]
fn synth_without_small_gain_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"synthesis": {"gains": {"n": 2, "gains": [
            {"i": 1, "j": 2, "fn": {"kind": "linear", "k": 2.0}},
            {"i": 2, "j": 1, "fn": {"kind": "linear", "k": 0.6}}]},
          "zeta": {"kind": "linear", "k": 1.0}, "a1": {"kind": "linear", "k": 1.0}}}"#,
    )
    .unwrap();
    let out = smallgain(&["synth", "--input", cfg.to_str().unwrap()], &tmp.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&tmp.path().join("out"))["small_gain"]["holds"], false);
}

#[test]
fn biochem_validation_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = smallgain(&["validate", "--input", &input("biochem_validate.json")], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(report(tmp.path())["implication"]["violation_count"], 0);
}
