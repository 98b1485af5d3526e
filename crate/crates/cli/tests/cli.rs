use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sarmanov"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fgm(a: f64) -> String {
    format!(r#"{{"schema":"sarmanov-config/1","dimension":2,"margins":[{{"kernel":"fgm"}}],"a":{a},"seed":11,"n":2000}}"#)
}

#[test]
fn admissible_config_exits_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ok.json", &fgm(1.0));
    let out = run(&["validate", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["admissible"], true);
}

#[test]
fn inadmissible_config_exits_one_with_interval() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "bad.json", &fgm(1.01));
    let out = run(&["validate", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["a_interval"]["lo"], -1.0);
    assert_eq!(v["a_interval"]["hi"], 1.0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("[-1, 1]"));
}

#[test]
fn malformed_and_invalid_configs_exit_two() {
    let dir = TempDir::new().unwrap();
    let broken = write_config(&dir, "broken.json", "{ not json");
    assert_eq!(run(&["validate", "--config", s(&broken)]).status.code(), Some(2));
    let unknown = write_config(
        &dir,
        "unknown.json",
        r#"{"schema":"sarmanov-config/1","dimension":2,"margins":[{"kernel":"nope"}],"a":0.1}"#,
    );
    assert_eq!(run(&["validate", "--config", s(&unknown)]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["validate", "--config", s(&missing)]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn catalog_lists_twenty_rows() {
    let out = run(&["catalog"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 21);
    assert!(lines[1].starts_with("1,fgm,,0.166666666667,"));
    assert!(text.contains("-2.25850103136"));
}

#[test]
fn sampling_is_deterministic_and_writes_sidecar() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ok.json", &fgm(0.7));
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let status = run(&["sample", "--config", s(&cfg), "--out", s(out), "--n", "500", "--seed", "5"]).status;
        assert_eq!(status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let single = dir.path().join("single.csv");
    let status = bin()
        .env("SARMANOV_THREADS", "1")
        .args(["sample", "--config", s(&cfg), "--out", s(&single), "--n", "500", "--seed", "5"])
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&single).unwrap());

    let meta: Value = serde_json::from_slice(&fs::read(dir.path().join("a.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["n"], 500);
    assert_eq!(meta["seed"], 5);
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 501);
    assert_eq!(text.lines().next().unwrap(), "u1,u2");
}

#[test]
fn trivariate_sample_has_three_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "d3.json",
        r#"{"schema":"sarmanov-config/1","dimension":3,"margins":[{"kernel":"fgm"}],
            "bernoulli":{"type":"named","coupling":"epd"},"seed":2}"#,
    );
    let out = dir.path().join("d3.csv");
    assert!(run(&["sample", "--config", s(&cfg), "--out", s(&out), "--n", "100"]).status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "u1,u2,u3");
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 3));
}

#[test]
fn powered_route_validates_and_samples() {
    let dir = TempDir::new().unwrap();
    let ok = write_config(
        &dir,
        "pow.json",
        r#"{"schema":"sarmanov-config/1","dimension":2,"margins":[{"kernel":"fgm"}],"a":0.25,"power":2}"#,
    );
    let out = run(&["validate", "--config", s(&ok)]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["powered"]["gap"], "unknown");
    let csv = dir.path().join("pow.csv");
    assert!(run(&["sample", "--config", s(&ok), "--out", s(&csv), "--n", "200"]).status.success());
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 201);

    let bad = write_config(
        &dir,
        "pow_bad.json",
        r#"{"schema":"sarmanov-config/1","dimension":2,"margins":[{"kernel":"fgm"}],"a":0.9,"power":3}"#,
    );
    assert_eq!(run(&["validate", "--config", s(&bad)]).status.code(), Some(1));
}

#[test]
fn certify_agrees_with_validate() {
    let dir = TempDir::new().unwrap();
    let ok = write_config(&dir, "ok.json", &fgm(1.0));
    let out = run(&["certify", "--config", s(&ok), "--grid", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("c1,c2,increment"));
    assert!(text.trim_end().ends_with("passed=true"));

    let json = run(&["certify", "--config", s(&ok), "--grid", "10", "--format", "json"]);
    let v: Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["passed"], true);

    let bad = write_config(&dir, "bad.json", &fgm(1.01));
    assert_eq!(run(&["certify", "--config", s(&bad)]).status.code(), Some(1));
}

#[test]
fn measure_reports_analytic_and_empirical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "ok.json", &fgm(1.0));
    let out = run(&["measure", "--config", s(&cfg), "--n", "20000"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let exact = v["analytic"]["spearman"].as_f64().unwrap();
    assert!((exact - 1.0 / 3.0).abs() < 1e-12);
    let est = v["empirical"]["spearman"]["value"].as_f64().unwrap();
    let se = v["empirical"]["spearman"]["se"].as_f64().unwrap();
    assert!((est - exact).abs() < 5.0 * se);

    let small = run(&["measure", "--config", s(&cfg), "--n", "10"]);
    assert_eq!(small.status.code(), Some(2));
}

#[test]
fn bounds_report_rho_range() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "hki.json",
        r#"{"schema":"sarmanov-config/1","dimension":2,"margins":[{"kernel":"hki","params":{"p":2}}],"a":0.1}"#,
    );
    let out = run(&["bounds", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["rho_s"]["lo"].as_f64().unwrap() + 0.1875).abs() < 1e-12);
    assert!((v["rho_s"]["hi"].as_f64().unwrap() - 0.375).abs() < 1e-12);
}
