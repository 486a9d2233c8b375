use std::path::Path;
use std::process::{Command, Output};

fn pemfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pemfc"))
        .args(args)
        .output()
        .expect("spawn pemfc")
}

fn path(p: &Path) -> String {
    p.display().to_string()
}

fn synth(dir: &Path) {
    let out = pemfc(&["synth", "--out", &path(dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_writes_full_horizon() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path());
    let voltage = std::fs::read_to_string(tmp.path().join("voltage.csv")).unwrap();
    assert_eq!(voltage.lines().count(), 38_073 + 1);
    let truth: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["eol_hour"], 35_914);
    assert_eq!(truth["planted_breakpoint_h"], 30_000.0);
}

#[test]
fn synth_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth(a.path());
    synth(b.path());
    for f in ["polarization.csv", "r_ohm.csv", "voltage.csv", "truth.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn invalid_breakpoint_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"synth": {"jlim": {"kind": "accelerated", "j_start": 1.8, "slope": -0.002,
            "curvature": -0.39, "t_c": 90000.0, "lambda": 1.5}}}"#,
    )
    .unwrap();
    let out = pemfc(&["synth", "--config", &path(&cfg), "--out", &path(&tmp.path().join("db"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_c"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"prognosis": {"tn": 1000}}"#).unwrap();
    let out = pemfc(&["synth", "--config", &path(&cfg), "--out", &path(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_database_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = pemfc(&[
        "identify",
        &path(&tmp.path().join("absent")),
        "--out",
        &path(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn pipeline_commands_write_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let db = tmp.path().join("db");
    synth(&db);
    let out = tmp.path().join("out");
    for cmd in ["identify", "fitlaws", "detect"] {
        let o = pemfc(&[cmd, &path(&db), "--out", &path(&out), "--tn", "20000"]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let params = std::fs::read_to_string(out.join("params.csv")).unwrap();
    assert_eq!(params.lines().count(), 41 + 1);
    let laws: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("laws.json")).unwrap()).unwrap();
    assert_eq!(laws["laws"]["jlim_model"]["model"], "model1");
    let det: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("detection.json")).unwrap()).unwrap();
    assert_eq!(det["detected"], false);
}

#[test]
fn predict_reports_ape_and_model1() {
    let tmp = tempfile::tempdir().unwrap();
    let db = tmp.path().join("db");
    synth(&db);
    let out = tmp.path().join("pred");
    let o = pemfc(&[
        "predict",
        &path(&db),
        "--out",
        &path(&out),
        "--tn",
        "35000",
        "--scenarios",
        "20",
        "--compare-model1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    let ape = m["truth"]["ape_median"].as_f64().unwrap();
    assert!(ape < 5.0, "APE {ape}");
    assert!(m["model1"]["ape"].as_f64().unwrap() > ape);
    let q = std::fs::read_to_string(out.join("quantiles.csv")).unwrap();
    assert_eq!(q.lines().count(), 3_000 + 1);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["prognosis"]["t_n"], 35_000.0);
    assert_eq!(manifest["case"], "detected");
}

#[test]
fn learning_end_beyond_horizon_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let db = tmp.path().join("db");
    synth(&db);
    let o = pemfc(&["predict", &path(&db), "--out", &path(tmp.path()), "--tn", "50000"]);
    assert_eq!(o.status.code(), Some(2));
    let o = pemfc(&["detect", &path(&db), "--out", &path(tmp.path()), "--tn", "1000.5"]);
    assert_eq!(o.status.code(), Some(2));
}
