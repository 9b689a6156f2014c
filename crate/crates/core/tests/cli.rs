use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    format!("{}/fixtures/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

fn qbd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbd-tail")).args(args).output().expect("binary runs")
}

fn temp_model(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qbd-tail-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn validate_m1_succeeds() {
    let out = qbd(&["validate", &fixture("m1")]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["ok"], true);
}

#[test]
fn malformed_file_is_a_parse_error() {
    let p = temp_model("broken.json", "{ \"phases\": 1, \"blocks\": ");
    assert_eq!(qbd(&["validate", p.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(qbd(&["analyze", "--c", "1,x", &fixture("m1")]).status.code(), Some(2));
}

#[test]
fn substochastic_rows_fail_validation() {
    let text = std::fs::read_to_string(fixture("m1")).unwrap().replace("\"0,0\": [[0.2]]", "\"0,0\": [[0.1]]");
    let p = temp_model("short_row.json", &text);
    let out = qbd(&["validate", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(qbd(&["analyze", "--c", "1,1", p.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn transient_model_is_rejected() {
    let out = qbd(&["analyze", "--c", "1,1", &fixture("transient")]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Transient"));
}

#[test]
fn analyze_reports_decay_rate() {
    let out = qbd(&["analyze", "--c", "1,2", &fixture("m1")]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let xi = v["tail"]["xi_c"].as_f64().unwrap();
    assert!((xi - 3.0 * 3f64.ln()).abs() < 1e-8);
}

#[test]
fn short_truncation_is_insufficient() {
    let out = qbd(&["verify", "--c", "1,1", "--N", "30", &fixture("m1")]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn verify_m1_passes_and_perturbation_is_detected() {
    let ok = qbd(&["verify", "--c", "1,1", "--N", "200", &fixture("m1")]);
    assert_eq!(ok.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert!(v["delta_xi_relative"].as_f64().unwrap() <= 0.02);
    let bad = qbd(&["verify", "--c", "1,1", "--N", "200", "--perturb-xi", "0.1", &fixture("m1")]);
    assert_eq!(bad.status.code(), Some(5));
}

#[test]
fn repeated_runs_are_byte_identical() {
    for args in [
        vec!["analyze", "--c", "1,1", "--with-prefactor", "--N", "100"],
        vec!["geometry", "--grid", "0.05"],
        vec!["--format", "table", "analyze", "--c", "2,1"],
    ] {
        let path = fixture("tangency");
        let mut a: Vec<&str> = args.clone();
        a.push(&path);
        let first = qbd(&a);
        assert_eq!(first.status.code(), Some(0), "{args:?}");
        assert_eq!(first.stdout, qbd(&a).stdout, "{args:?}");
    }
}

#[test]
fn geometry_emits_csv_on_the_curve() {
    let out = qbd(&["geometry", "--grid", "0.1", &fixture("m1")]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("theta1,"));
    assert!(lines.count() > 10);
}
