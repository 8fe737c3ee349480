use std::process::{Command, Output};

fn qgraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qgraph")).args(args).env_remove("QGRAPH_OUT_DIR").output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn csv_column(body: &str, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn construct_reports_all_checks_passing() {
    let out = qgraph(&["construct", "--eps", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["all_pass"], true);
    assert!(v["checks"].as_array().unwrap().len() > 5);
}

#[test]
fn construct_out_of_range_is_a_usage_error() {
    let out = qgraph(&["construct", "--eps", "1.2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn parse_errors_exit_one_and_help_exits_zero() {
    assert_eq!(qgraph(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(qgraph(&["obstruction", "--eps", "0.1", "--q", "0"]).status.code(), Some(1));
    assert_eq!(qgraph(&["approx", "--k", "1"]).status.code(), Some(1));
    assert_eq!(qgraph(&["--help"]).status.code(), Some(0));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_qgraph"))
        .args(["construct", "--eps", "0.1"])
        .env("QGRAPH_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(dir.path().join("construct.json")).unwrap();
    assert!(written.contains("\"all_pass\": true"));
}

#[test]
fn explicit_out_wins_over_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("nested/table.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_qgraph"))
        .args(["approx", "--profile", "twosheet", "--k", "4", "--out"])
        .arg(&file)
        .env("QGRAPH_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(file.exists());
    assert!(!dir.path().join("approx.csv").exists());
}

#[test]
fn outputs_are_deterministic() {
    let args = ["obstruction", "--eps", "0.1", "--q", "2", "--samples", "3", "--seed", "11"];
    assert_eq!(qgraph(&args).stdout, qgraph(&args).stdout);
    let other = qgraph(&["obstruction", "--eps", "0.1", "--q", "2", "--samples", "3", "--seed", "12"]);
    assert_ne!(qgraph(&args).stdout, other.stdout);
}

#[test]
fn flat_family_has_no_vertical_mass() {
    let out = qgraph(&["obstruction", "--eps", "0.1", "--q", "3", "--samples", "3", "--family", "flat", "--mesh", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let body = stdout(&out);
    assert_eq!(csv_column(&body, "mV"), vec![0.0; 3]);
    for (mh, n) in csv_column(&body, "mH").into_iter().zip([2.0, 3.0, 4.0]) {
        assert!((mh - 3.0).abs() < 1e-12, "n = {n}: {mh}");
    }
}

#[test]
fn branched_family_respects_ratio() {
    let out =
        qgraph(&["obstruction", "--eps", "0.1", "--q", "2", "--samples", "3", "--family", "branched", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = stdout(&out);
    for (mv, ratio) in csv_column(&body, "mV").into_iter().zip(csv_column(&body, "ratio")) {
        assert!(mv == 0.0 || ratio >= 1.0 / 200.0 - 1e-8);
    }
}

#[test]
fn envelope_at_ray_is_zero() {
    let out = qgraph(&["envelope", "--eps", "0.1", "--q", "1", "--target", "ray2", "--mesh", "4", "--starts", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["bracket"]["upper"]["value"], 0.0);
    assert!(v["bracket"]["lower"].is_null());
}

#[test]
fn certificate_from_inputs_file() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"upper_at_rays": [0.0, 0.0, 0.0], "lower_at_zero": 1e-6}"#).unwrap();
    let out = qgraph(&["certificate", "--eps", "0.1", "--q", "2", "--inputs", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["valid"], true);

    let partial = dir.path().join("partial.json");
    std::fs::write(&partial, r#"{"upper_at_rays": [0.0, 0.0, 0.0]}"#).unwrap();
    let out = qgraph(&["certificate", "--eps", "0.1", "--q", "2", "--inputs", partial.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn failed_invariant_exits_two() {
    // Upper bounds large enough that the weighted sum exceeds the lower bound.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weak.json");
    std::fs::write(&path, r#"{"upper_at_rays": [1.0, 1.0, 1.0], "lower_at_zero": 1e-6}"#).unwrap();
    let out = qgraph(&["certificate", "--eps", "0.1", "--q", "2", "--inputs", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invariant failed: certificate_valid"));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["valid"], false);
}

fn assert_matches_schema(name: &str, body: &str) {
    let path = format!("{}/../../docs/schemas/{name}.schema.json", env!("CARGO_MANIFEST_DIR"));
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let instance: serde_json::Value = serde_json::from_str(body).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| format!("{}: {e}", e.instance_path())).collect();
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

#[test]
fn json_outputs_match_shipped_schemas() {
    assert_matches_schema("construct", &stdout(&qgraph(&["construct", "--eps", "0.1"])));
    for target in ["zero", "ray1"] {
        let out = qgraph(&["envelope", "--eps", "0.1", "--q", "2", "--target", target, "--mesh", "4", "--starts", "2"]);
        assert_matches_schema("envelope", &stdout(&out));
    }
    let out = qgraph(&["certificate", "--eps", "0.1", "--q", "1", "--mesh", "4", "--starts", "2"]);
    assert_matches_schema("certificate", &stdout(&out));
    assert_matches_schema("certificate-inputs", r#"{"upper_at_rays": [0.0, 0.0, 0.0], "lower_at_zero": 1e-6}"#);
}
