use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use revlab::cli::{run, validate, verify_manifest, Overrides};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run_config(name: &str, overrides: &Overrides, out: &Path) -> revlab::cli::RunOutcome {
    let cfg = validate(&fs::read_to_string(config(name)).unwrap(), overrides).unwrap();
    run(&cfg, out).unwrap()
}

fn data(dir: &Path, name: &str) -> serde_json::Value {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap();
    assert_eq!(v["schema"], "revlab/1");
    v["data"].clone()
}

#[test]
fn check_rev_rigid_rotation_passes_with_zero_residual() {
    let dir = tempfile::tempdir().unwrap();
    run_config("check-rev-rigid.toml", &Overrides::default(), dir.path());
    let d = data(dir.path(), "check.json");
    assert_eq!(d["pass"], true);
    assert!(d["reversibility"]["max_residual"].as_f64().unwrap() < 1e-15);
}

#[test]
fn nf_equilibria_lists_ten() {
    let dir = tempfile::tempdir().unwrap();
    run_config("nf-equilibria.toml", &Overrides::default(), dir.path());
    let d = data(dir.path(), "equilibria.json");
    assert_eq!(d["count"], 10);
    assert_eq!(d["equilibria"].as_array().unwrap().len(), 10);
    assert_eq!(d["counts"]["saddles"], 5);
    assert_eq!(d["counts"]["centers"], 5);
}

#[test]
fn pitchfork_scan_reports_sink_source_region() {
    let dir = tempfile::tempdir().unwrap();
    run_config("pitchfork-q6.toml", &Overrides::default(), dir.path());
    let d = data(dir.path(), "events.json");
    let events = d["events"].as_array().unwrap();
    assert!(events.iter().any(|e| e["kind"] == "sink-source-onset"), "{events:?}");
    assert!(!d["intervals"].as_array().unwrap().is_empty());
    assert!(fs::read_to_string(dir.path().join("region.svg")).unwrap().contains("source=cells.csv, intervals.csv"));
}

#[test]
fn reruns_and_thread_counts_reproduce_bytes() {
    for name in ["check-rev-nf.toml", "pitchfork-q6.toml", "map-confirm-q6.toml", "pendulum.toml"] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ma = run_config(name, &Overrides::default(), a.path()).manifest;
        let mb = run_config(name, &Overrides { seed: None, threads: Some(4) }, b.path()).manifest;
        assert_eq!(ma.files.len(), mb.files.len());
        for (fa, fb) in ma.files.iter().zip(&mb.files) {
            assert_eq!(fa.name, fb.name);
            assert_eq!(fa.sha256, fb.sha256, "{name}: {}", fa.name);
        }
    }
}

#[test]
fn seed_changes_samples_and_is_recorded() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_config("check-rev-twist.toml", &Overrides::default(), a.path()).manifest;
    let mb = run_config("check-rev-twist.toml", &Overrides { seed: Some(99), threads: None }, b.path()).manifest;
    assert_ne!(ma.files[0].sha256, mb.files[0].sha256);
    let head = fs::read_to_string(b.path().join("samples.csv")).unwrap();
    assert!(head.starts_with("# schema=revlab/1 command=check-rev seed=99\n"));
}

#[test]
fn manifest_digests_verify_and_detect_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_config("twist.toml", &Overrides::default(), dir.path()).manifest;
    let names: Vec<&str> = m.files.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["twist.csv", "twist.json", "twist.svg"]);
    assert!(verify_manifest(dir.path()).unwrap().iter().all(|(_, ok)| *ok));
    fs::write(dir.path().join("twist.csv"), "tampered\n").unwrap();
    let checks = verify_manifest(dir.path()).unwrap();
    assert!(checks.iter().any(|(n, ok)| n == "twist.csv" && !ok));
}

#[test]
fn missing_tolerance_is_noted_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_config("check-rev-rigid.toml", &Overrides::default(), dir.path()).manifest;
    assert!(m.defaults.iter().any(|d| d.starts_with("op.tol = ")));
    let text = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(text.contains("op.tol = "));
}

fn exit_code(cfg_text: &str) -> (i32, String) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(&path, cfg_text).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_revlab"))
        .args(["--config", path.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()])
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn exit_codes_distinguish_failures() {
    assert_eq!(exit_code("command = \"diophantine\"\n[op]\npsi0 = 0.5\n").0, 0);
    let (code, err) = exit_code("command = \"nf-equilibria\"\n[system]\nq = 4\n[op]\nscan_point = 10\n");
    assert_eq!(code, 2);
    assert!(err.contains("≥ 5") && err.contains("scan_points"), "{err}");
    let (code, err) = exit_code("command = \"rotation\"\n[system]\nname = \"twist-std\"\n[op]\nchart = \"polar\"\n");
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("left the chart"));
}
