use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dirac-floer"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(stage: &str, cfg: &Path, out: &Path) -> Output {
    bin().args([stage, "--config"]).arg(cfg).arg("--out").arg(out).output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn verify_linear_case() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("verify", &config("linear.json"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let h = read_json(&dir.path().join("homology.json"));
    let dims: Vec<u64> = h["homology"]["dims"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(dims, vec![1, 0, 0, 1]);
    assert_eq!(h["d_squared_failures"], Value::Array(vec![]));
    for d in 0..4 {
        assert!(dir.path().join(format!("boundary_{d}.txt")).exists());
    }
    let v = read_json(&dir.path().join("verify.json"));
    assert_eq!(v["pass"], Value::Bool(true));
    let b1 = fs::read_to_string(dir.path().join("boundary_2.txt")).unwrap();
    assert!(b1.lines().any(|l| l.trim() == "1"), "{b1}");

    // A rerun reads the cached parities and reproduces every artifact.
    let first = snapshot(dir.path());
    let again = run("verify", &config("linear.json"), dir.path());
    assert!(again.status.success());
    assert!(String::from_utf8_lossy(&again.stderr).contains("cached"));
    assert_eq!(first, snapshot(dir.path()));

    // So does a fresh run with a different thread count.
    let other = tempfile::tempdir().unwrap();
    let fresh = bin()
        .args(["verify", "--threads", "2", "--config"])
        .arg(config("linear.json"))
        .arg("--out")
        .arg(other.path())
        .output()
        .unwrap();
    assert!(fresh.status.success());
    assert_eq!(first, snapshot(other.path()));
}

#[test]
fn stale_cache_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("parities.json"), r#"{"config_hash": "0", "report": null}"#).unwrap();
    let out = run("orbits", &config("linear.json"), dir.path());
    assert!(out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).contains("cached"));
    let p = read_json(&dir.path().join("parities.json"));
    assert_eq!(p["report"]["entries"].as_array().unwrap().len(), 3);
}

#[test]
fn malformed_json_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\"model\": {\"type\": \"circle\", \"N\": 2, \"Q\": 32},\n \"hamiltonian\": {\"type\": \"quadratic\"\n").unwrap();
    let out = run("crit", &cfg, dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    fs::write(&cfg, r#"{"model": {"type": "circle", "N": 2, "Q": "x"}, "hamiltonian": {"type": "quadratic"}, "window": {"a": 0, "b": 1}}"#)
        .unwrap();
    let out = run("crit", &cfg, dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.Q"));

    fs::write(&cfg, r#"{"model": {"type": "circle", "N": 2, "Q": 4}, "hamiltonian": {"type": "quadratic"}, "window": {"a": 0, "b": 1}}"#)
        .unwrap();
    let out = run("crit", &cfg, dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("model"));
}

#[test]
fn undecided_parities_fail_with_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("linear.json")).unwrap();
    let coarse = text.replace(r#""complex": {"flavor": "plain"},"#, r#""complex": {"flavor": "plain"}, "shooting": {"max_refine": 0, "mesh0": 4},"#);
    assert_ne!(text, coarse);
    let cfg = dir.path().join("coarse.json");
    fs::write(&cfg, coarse).unwrap();
    let out = run("complex", &cfg, dir.path());
    assert!(!out.status.success());
    let t = fs::read_to_string(dir.path().join("transcript.txt")).unwrap();
    assert!(t.contains("undecided parities: 1"), "{t}");
    assert!(!dir.path().join("homology.json").exists());
}

#[test]
fn flow_from_critical_point_is_stationary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("flow", &config("flow_at_critical_point.json"), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().ends_with(",lambda,energy"));
    let energies: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(energies.len() > 10);
    assert!(energies.iter().all(|e| (e - 0.5).abs() < 1e-12));
}

#[test]
fn spectrum_and_crit_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("flow_at_critical_point.json");
    assert!(run("spectrum", &cfg, dir.path()).status.success());
    let s = read_json(&dir.path().join("spectrum.json"));
    assert_eq!(s["eigenvalues"], serde_json::json!([-1.5, -0.5, 0.5, 1.5]));
    assert_eq!(s["n_neg"], 2);
    assert!(run("crit", &cfg, dir.path()).status.success());
    let c = read_json(&dir.path().join("critical_points.json"));
    let pts = c["window"]["points"].as_array().unwrap();
    let idx: Vec<i64> = pts.iter().map(|p| p["rel_index"].as_i64().unwrap()).collect();
    assert_eq!(idx, vec![0, 2]);
}

#[test]
fn equivariant_flavors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run("complex", &config("linear_z2.json"), dir.path()).status.success());
    let h = read_json(&dir.path().join("homology.json"));
    assert_eq!(h["homology"]["dims"], serde_json::json!([1, 1, 1, 1]));
    let dir = tempfile::tempdir().unwrap();
    assert!(run("complex", &config("linear_s1.json"), dir.path()).status.success());
    let h = read_json(&dir.path().join("homology.json"));
    assert_eq!(h["homology"]["dims"], serde_json::json!([1, 0, 1]));
}
