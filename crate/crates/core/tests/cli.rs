use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use softmax_codes::closed_forms::simplex_etf;
use softmax_codes::io::{read_configuration, write_configuration};

fn gnc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnc"))
        .args(args)
        .env("GNC_THREADS", "2")
        .output()
        .expect("gnc runs")
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn validated(name: &str, text: &[u8]) -> Value {
    let value: Value = serde_json::from_slice(text).unwrap();
    let validator = schema(name);
    let errors: Vec<String> = validator.iter_errors(&value).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{name}: {errors:?}");
    value
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn solve_softmax_code_circle() {
    let out = gnc(&["solve", "softmax-code", "--dim", "2", "--classes", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let v = validated("solve_report.v1.schema.json", &out.stdout);
    let achieved = v["achieved"].as_f64().unwrap();
    assert!((achieved - (1.0 - 45f64.to_radians().cos())).abs() < 1e-4);
    assert_eq!(v["objective_kind"], "one-vs-rest");
    assert_eq!(v["per_restart"].as_array().unwrap().len(), 16);
}

#[test]
fn solve_tammes_octahedron_writes_files() {
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("oct");
    let out = gnc(&[
        "solve", "tammes", "--dim", "3", "--classes", "6", "--restarts", "4", "--out",
        stem.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read(dir.path().join("oct.json")).unwrap();
    let v = validated("solve_report.v1.schema.json", &report);
    assert!((v["achieved"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-3);

    let csv = std::fs::read(dir.path().join("oct.csv")).unwrap();
    let config = read_configuration(csv.as_slice(), false).unwrap();
    assert_eq!((config.dim(), config.count()), (3, 6));
    // writing the parsed configuration again gives the same text
    let mut again = Vec::new();
    write_configuration(&mut again, &config).unwrap();
    let reparsed = read_configuration(again.as_slice(), false).unwrap();
    for (a, b) in reparsed.matrix().iter().zip(config.matrix().iter()) {
        assert!((a - b).abs() <= 1e-15);
    }
}

#[test]
fn solve_rejects_bad_flags() {
    assert_eq!(gnc(&["solve", "softmax-code", "--dim", "0", "--classes", "4"]).status.code(), Some(2));
    assert_eq!(gnc(&["solve", "softmax-code", "--dim", "2"]).status.code(), Some(2));
    assert_eq!(gnc(&["solve", "softmax-code", "--dim", "2", "--classes", "1"]).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_gnc"))
        .args(["bounds", "--dim", "2", "--classes", "10"])
        .env("GNC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_is_byte_identical() {
    let args = ["solve", "softmax-code", "--dim", "3", "--classes", "7", "--restarts", "4", "--seed", "9"];
    let a = gnc(&args);
    let b = gnc(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

fn etf_fixture(dir: &Path, flip_features: bool) -> (PathBuf, PathBuf) {
    let etf = simplex_etf(3, 4).unwrap();
    let mut features = String::from("label,f0,f1,f2\n");
    for k in 0..4 {
        for _ in 0..3 {
            let c = etf.column(k);
            let s = if flip_features { -1.0 } else { 1.0 };
            features.push_str(&format!("{k},{},{},{}\n", s * c[0], s * c[1], s * c[2]));
        }
    }
    let mut weights = Vec::new();
    write_configuration(&mut weights, &etf).unwrap();
    (
        write(dir, "features.csv", &features),
        write(dir, "weights.csv", &String::from_utf8(weights).unwrap()),
    )
}

#[test]
fn analyze_collapsed_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (f, w) = etf_fixture(dir.path(), false);
    let out = gnc(&[
        "analyze", "metrics", "--features", f.to_str().unwrap(), "--weights", w.to_str().unwrap(),
        "--reference", "auto",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = validated("gnc_report.v1.schema.json", &out.stdout);
    assert!(v["gnc1"].as_f64().unwrap().abs() < 1e-12);
    assert!(v["gnc3"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(v["ncc_accuracy"].as_f64().unwrap(), 1.0);
    assert!((v["gnc2_reference"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-12);
    assert_eq!(v.as_object().unwrap().len(), 8);
}

#[test]
fn analyze_flipped_means() {
    let dir = tempfile::tempdir().unwrap();
    let (f, w) = etf_fixture(dir.path(), true);
    let out = gnc(&["analyze", "metrics", "--features", f.to_str().unwrap(), "--weights", w.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = validated("gnc_report.v1.schema.json", &out.stdout);
    assert!((v["gnc3"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!(v["gnc2_reference"].is_null());
}

#[test]
fn analyze_rejects_malformed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let (f, _) = etf_fixture(dir.path(), false);
    let w2 = write(dir.path(), "w2.csv", "1,0\n0,1\n-1,0\n0,-1\n");
    let out = gnc(&["analyze", "metrics", "--features", f.to_str().unwrap(), "--weights", w2.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));

    let bad = write(dir.path(), "bad.csv", "label,f0,f1,f2\n0,1,0,0\n1,0,oops,0\n");
    let (_, w) = etf_fixture(dir.path(), false);
    let out = gnc(&["analyze", "metrics", "--features", bad.to_str().unwrap(), "--weights", w.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let missing = dir.path().join("nope.csv");
    let out = gnc(&["analyze", "metrics", "--features", missing.to_str().unwrap(), "--weights", w.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn bounds_command() {
    let out = gnc(&["bounds", "--dim", "2", "--classes", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let v = validated("bounds.v1.schema.json", &out.stdout);
    assert!((v["lower"].as_f64().unwrap() - 0.012337).abs() < 1e-6);
    assert!((v["upper"].as_f64().unwrap() - 0.628319).abs() < 1e-6);
    assert_eq!(gnc(&["bounds", "--dim", "1", "--classes", "10"]).status.code(), Some(2));
}

#[test]
fn scan_command() {
    let out = gnc(&["scan", "--classes", "100", "--dims", "8,16,32"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "d,lower,upper,rho");
    assert_eq!(lines.len(), 4);
    let col = |i: usize| -> Vec<f64> { lines[1..].iter().map(|l| l.split(',').nth(i).unwrap().parse().unwrap()).collect() };
    for c in [col(1), col(2)] {
        assert!(c.windows(2).all(|w| w[1] >= w[0]));
    }

    let out = gnc(&["scan", "--classes", "12", "--dims", "2,3", "--with-solver", "--restarts", "2", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v = validated("scan.v1.schema.json", &out.stdout);
    for row in v["rows"].as_array().unwrap() {
        let rho = row["rho"].as_f64().unwrap();
        assert!(rho >= row["lower"].as_f64().unwrap() - 1e-9);
        assert!(rho <= row["upper"].as_f64().unwrap() + 1e-9);
    }
}

#[test]
fn verify_hardmax_command() {
    let out = gnc(&["verify", "hardmax", "--restarts", "8"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = validated("hardmax.v1.schema.json", &out.stdout);
    assert_eq!(v["rows"].as_array().unwrap().len(), 5);
    assert!(v["final_gap"].as_f64().unwrap() < 0.02);

    let out = gnc(&["verify", "hardmax", "--taus", "1", "--no-gate", "--restarts", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = validated("hardmax.v1.schema.json", &out.stdout);
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);

    let out = gnc(&["verify", "hardmax", "--classes", "2", "--restarts", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = validated("hardmax.v1.schema.json", &out.stdout);
    assert!(v["final_gap"].as_f64().unwrap() < 1e-6);
}

#[test]
fn closed_form_command() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("etf.csv");
    let out = gnc(&["closed-form", "--dim", "3", "--classes", "4", "--out", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let c = read_configuration(std::fs::read(&p).unwrap().as_slice(), false).unwrap();
    let g = c.gram();
    assert!((g[(0, 1)] + 1.0 / 3.0).abs() < 1e-12);

    let out = gnc(&["closed-form", "--dim", "3", "--classes", "12"]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no closed form"));

    let out = gnc(&["closed-form", "--dim", "2", "--classes", "360"]);
    assert_eq!(out.status.code(), Some(0));
    let c = read_configuration(out.stdout.as_slice(), false).unwrap();
    assert_eq!(c.count(), 360);
}
