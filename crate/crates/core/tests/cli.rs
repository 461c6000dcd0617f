use std::path::Path;
use std::process::{Command, Output};

use civrep::harness::{EffectReport, EstimateReport};

const BIN: &str = env!("CARGO_BIN_EXE_civrep");
const DAGS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/dags");

fn civrep(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("CIVREP_OUT_DIR").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Last stderr line parsed as the machine-readable error object.
fn error_kind(o: &Output) -> String {
    let err = String::from_utf8_lossy(&o.stderr);
    let last = err.lines().last().unwrap_or_default();
    let v: serde_json::Value = serde_json::from_str(last).unwrap_or_else(|_| panic!("not json: {err}"));
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn civ_check_verdicts() {
    let scheme = format!("{DAGS}/scheme.dag");
    let o = civrep(&["civ-check", "--dag", &scheme, "--iv", "S", "--cond", "C,F", "--treatment", "W", "--outcome", "Y", "--json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["valid"], true);

    let o = civrep(&["civ-check", "--dag", &scheme, "--iv", "S", "--treatment", "W", "--outcome", "Y"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("valid: false"));
    assert!(stdout(&o).contains("open path S"));
}

#[test]
fn dsep_reports_path_or_separation() {
    let synth = format!("{DAGS}/synthetic.dag");
    let o = civrep(&["dsep", "--dag", &synth, "--a", "X1", "--b", "X5"]);
    assert_eq!(stdout(&o).trim(), "d-separated");
    let o = civrep(&["dsep", "--dag", &synth, "--a", "X1", "--b", "U1", "--given", "S"]);
    assert_eq!(stdout(&o).trim(), "d-connected: X1 - S - U1");
}

#[test]
fn exit_codes() {
    assert_eq!(civrep(&["--help"]).status.code(), Some(0));
    let o = civrep(&["frobnicate"]);
    assert_eq!((o.status.code(), error_kind(&o).as_str()), (Some(1), "usage"));
    let o = civrep(&["dsep", "--dag", &format!("{DAGS}/scheme.dag"), "--a", "S", "--b", "Nope"]);
    assert_eq!((o.status.code(), error_kind(&o).as_str()), (Some(1), "usage"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "S,W,Y\n1.0,0.5,2.0\n").unwrap();
    let schema = dir.path().join("bad.toml");
    std::fs::write(&schema, "S = \"feature\"\nW = \"treatment\"\nY = \"outcome\"\n").unwrap();
    let o = civrep(&["estimate", "--data", p(&bad), "--schema", p(&schema), "--estimators", "naive", "--out", p(&dir.path().join("r.json"))]);
    assert_eq!((o.status.code(), error_kind(&o).as_str()), (Some(2), "data"));
}

#[test]
fn gen_train_estimate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let o = civrep(&["gen", "--n", "300", "--seed", "4", "--out", p(&data)]);
    assert!(o.status.success(), "{o:?}");
    let schema = dir.path().join("d.schema.toml");
    assert!(schema.is_file());

    let cfg = dir.path().join("model.toml");
    std::fs::write(&cfg, "hidden = [8]\nepochs = 2\nbatch_size = 64\n").unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let o = civrep(&["train", "--data", p(&data), "--schema", p(&schema), "--config", p(&cfg), "--out", p(&ckpt)]);
    assert!(o.status.success(), "{o:?}");
    assert!(dir.path().join("m.history.json").is_file());

    let ts = dir.path().join("ts.toml");
    std::fs::write(&ts, "hidden = [8]\nstage1_epochs = 2\nstage2_epochs = 2\n").unwrap();
    let out = dir.path().join("r.json");
    let o = civrep(&[
        "estimate", "--data", p(&data), "--schema", p(&schema), "--checkpoint", p(&ckpt), "--two-stage", p(&ts), "--true-ace", "2",
        "--out", p(&out),
    ]);
    assert!(o.status.success(), "{o:?}");
    let report: EstimateReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.rows.iter().all(|r| r.sqrt_pehe.is_some() && r.eps_ace.is_some()));

    // model config errors are usage errors
    std::fs::write(&cfg, "hidden = [8]\nwidth = 3\n").unwrap();
    let o = civrep(&["train", "--data", p(&data), "--schema", p(&schema), "--config", p(&cfg), "--out", p(&ckpt)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn experiment_honours_output_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "replications = 2\nestimators = [\"naive\"]\noutput_dir = \"elsewhere\"\n[data]\nsource = \"synthetic\"\nn = 200\n",
    )
    .unwrap();
    let out = dir.path().join("redirected");
    let o = Command::new(BIN)
        .args(["experiment", "--config", p(&cfg)])
        .env("CIVREP_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{o:?}");
    let report = EffectReport::read_json(&out.join("report.json")).unwrap();
    report.check_consistency().unwrap();
    assert_eq!(report.rows.len(), 4);
    assert!(out.join("replications.csv").is_file());
}
