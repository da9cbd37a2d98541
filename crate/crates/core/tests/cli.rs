use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn folia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_folia")).args(args).output().unwrap()
}

fn run(verb: &str, config: &Path, out: &Path, extra: &[&str]) -> (i32, Value) {
    let mut args = vec![verb, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = folia(&args);
    let report = fs::read_to_string(out.join("report.json"))
        .map(|s| serde_json::from_str(&s).unwrap())
        .unwrap_or(Value::Null);
    (o.status.code().unwrap(), report)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn flat_identities_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, r) = run("check", &scenario("identities-flat.toml"), tmp.path(), &[]);
    assert_eq!(code, 0);
    assert_eq!(r["schema"], 1);
    assert_eq!(r["task"], "identities");
    assert_eq!(r["seed"], 1);
    assert_eq!(r["passed"], true);
    for name in ["realization", "conservation", "weitzenbock", "divergence_theorem"] {
        let m = r["runs"][0]["measurements"]
            .as_array()
            .unwrap()
            .iter()
            .find(|m| m["name"] == name)
            .unwrap();
        assert!(m["value"].as_f64().unwrap() < 1e-10, "{name}: {m}");
    }
    assert!(r["defaults"]["fd_steps"].is_array());
    assert!(r["inputs"]["scenario_toml"].as_str().unwrap().contains("product-flat-torus"));
    assert!(r["timings"]["total_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn second_variation_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, r) = run("vary", &scenario("vary-sphere.toml"), tmp.path(), &[]);
    assert_eq!(code, 0);
    let d = &r["runs"][0]["details"]["variation"];
    assert!(d["fd"].is_number() && d["formula"].is_number());
    assert_eq!(r["runs"][0]["details"]["formula_extension"], true);
}

#[test]
fn sweep_reports_orders() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, r) = run("sweep", &scenario("conservation-sweep.toml"), tmp.path(), &[]);
    assert_eq!(code, 0, "{}", r["verdicts"]);
    let rows = r["sweep"].as_array().unwrap();
    let cons = rows.iter().find(|x| x["name"] == "conservation").unwrap();
    let p = cons["study"]["observed"].as_f64().unwrap();
    assert!((1.8..=2.4).contains(&p), "{p}");
    let div = rows.iter().find(|x| x["name"] == "divergence_theorem").unwrap();
    assert_eq!(div["study"]["at_roundoff"], true);
    let table = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert!(table.starts_with("measurement,resolution,residual,order,at_roundoff"));
    assert!(tmp.path().join("n64").is_dir());
}

#[test]
fn sweep_of_flat_weitzenbock_is_at_roundoff() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "w.toml",
        r#"
resolutions = [16, 32, 64]
[source]
model = "product-flat-torus"
resolution = 16
[target]
name = "flat-torus"
[map]
kind = "linear"
matrix = [2, 1, 0, 1]
[task]
kind = "identities"
"#,
    );
    let (code, r) = run("sweep", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code, 0);
    let w = r["sweep"].as_array().unwrap().iter().find(|x| x["name"] == "weitzenbock").unwrap();
    assert_eq!(w["study"]["at_roundoff"], true);
    assert!(w["study"]["residuals"].as_array().unwrap().iter().all(|v| v.as_f64().unwrap() < 1e-10));
}

#[test]
fn spectrum_writes_eigenvalues() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, r) = run("spectrum", &scenario("spectrum-identity.toml"), tmp.path(), &["--threads", "2"]);
    assert_eq!(code, 0);
    assert_eq!(r["runs"][0]["details"]["stability"]["kernel_dimension"], 2);
    let csv = fs::read_to_string(tmp.path().join("spectrum.csv")).unwrap();
    assert_eq!(csv.lines().count(), 19);
}

#[test]
fn flow_writes_trace_and_map_that_reload() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("flow");
    let (code, r) = run("flow", &scenario("bienergy-flow.toml"), &out, &[]);
    assert_eq!(code, 0);
    assert_eq!(r["runs"][0]["details"]["kind"], "bienergy");
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("step,energy,bienergy,tension_inf,max_u"));
    let cfg = write(
        tmp.path(),
        "again.toml",
        r#"
[source]
model = "product-flat-torus"
resolution = 16
[target]
name = "flat-torus"
[map]
kind = "file"
path = "flow/final_map.csv"
winding = [1, 0, 0, 1]
"#,
    );
    let (code, r) = run("check", &cfg, &tmp.path().join("check"), &[]);
    assert_eq!(code, 0);
    let tau = r["runs"][0]["measurements"][2]["value"].as_f64().unwrap();
    assert!(tau < 1e-4, "{tau}");
}

#[test]
fn missing_target_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "[source]\nmodel = \"product-flat-torus\"\nresolution = 16\n");
    let o = folia(&["check", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("target"));
}

#[test]
fn unknown_model_and_missing_file_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "m.toml",
        "[source]\nmodel = \"klein-bottle\"\nresolution = 16\n[target]\nname = \"flat-torus\"\n",
    );
    assert_eq!(run("check", &cfg, &tmp.path().join("a"), &[]).0, 2);
    assert_eq!(run("check", &tmp.path().join("nope.toml"), &tmp.path().join("b"), &[]).0, 2);
    assert_eq!(folia(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn sweep_needs_a_task_and_a_ladder() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, r) = run("sweep", &scenario("identities-flat.toml"), tmp.path(), &[]);
    assert_eq!(code, 2);
    assert!(r["error"]["message"].as_str().unwrap().contains("task.kind"));
}

#[test]
fn chart_exit_is_a_numerical_abort() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "abort.toml",
        r#"
[source]
model = "product-flat-torus"
resolution = 16
[target]
name = "hyperbolic-disk"
[map]
kind = "seeded-random"
bandlimit = 1
amplitude = 0.5
[flow]
dt = 1.0
"#,
    );
    let out = tmp.path().join("out");
    let (code, r) = run("flow", &cfg, &out, &[]);
    assert_eq!(code, 3);
    assert_eq!(r["error"]["numerical"], true);
    assert!(out.join("trace.csv").exists());
}

#[test]
fn failed_tolerance_exits_one_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "t.toml",
        r#"
seed = 4
[source]
model = "warped-torus"
epsilon = 0.2
resolution = 16
[target]
name = "sphere-stereo"
[map]
kind = "seeded-random"
bandlimit = 2
amplitude = 0.5
[task]
order = "first"
[tolerances]
variation_energy = 1e-12
"#,
    );
    let (code, r) = run("vary", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code, 1);
    assert_eq!(r["passed"], false);
}

#[test]
fn seed_flag_overrides_and_single_thread_runs_reproduce() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scenario("vary-sphere.toml");
    let (_, a) = run("vary", &cfg, &tmp.path().join("a"), &["--seed", "11", "--threads", "1"]);
    let (_, b) = run("vary", &cfg, &tmp.path().join("b"), &["--seed", "11", "--threads", "1"]);
    assert_eq!(a["seed"], 11);
    assert_eq!(a["runs"][0]["measurements"], b["runs"][0]["measurements"]);
    // the embedded scenario reproduces the run
    let again = write(tmp.path(), "again.toml", a["inputs"]["scenario_toml"].as_str().unwrap());
    let (_, c) = run("vary", &again, &tmp.path().join("c"), &["--threads", "1"]);
    assert_eq!(a["runs"][0]["measurements"], c["runs"][0]["measurements"]);
}

#[test]
fn validate_reports_every_check() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, r) = run("validate", &scenario("identities-flat.toml"), tmp.path(), &[]);
    assert_eq!(code, 0);
    let names: Vec<&str> = r["verdicts"].as_array().unwrap().iter().map(|v| v["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"metric_spd") && names.contains(&"kappa_closed"));
}
