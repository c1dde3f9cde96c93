use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use geodesic_reeb::orbits::{Classification, ClosedOrbitRecord};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reeb-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, task: &str, config: Option<&str>, extra: &[&str]) -> Output {
    let out = dir.join("out");
    let mut args = vec![task.to_string(), "--out".into(), out.display().to_string()];
    if let Some(text) = config {
        let path = dir.join("config.toml");
        fs::write(&path, text).unwrap();
        args.push("--config".into());
        args.push(path.display().to_string());
    }
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    lab(&refs)
}

fn table(path: &Path) -> toml::Table {
    fs::read_to_string(path).unwrap().parse().unwrap()
}

#[test]
fn round_identities_are_tight() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        "identities",
        Some("[identities]\nsamples = 2000\n"),
        &[],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let t = table(&dir.path().join("out/identities.toml"));
    for key in [
        "max_f_pullback",
        "max_h_pullback",
        "max_reeb_equation",
        "max_reeb_kernel",
        "conjugacy",
    ] {
        let v = t[key].as_float().unwrap();
        assert!(v < 1e-8, "{key} = {v}");
    }
}

#[test]
fn round_equator_orbit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        "find-orbit",
        Some("task = \"find-orbit\"\n[orbit]\nself_linking = false\n"),
        &[],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("out/orbit.toml")).unwrap();
    let rec = ClosedOrbitRecord::from_toml(&text).unwrap();
    assert!((rec.period - 2.0 * PI).abs() < 1e-8);
    assert_eq!(rec.classification, Classification::Degenerate);
    assert!(dir.path().join("out/run-metadata.toml").exists());
}

#[test]
fn malformed_config_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        "find-orbit",
        Some("seed = 2\n[tolerances]\nrtol = \"tight\"\n"),
        &[],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn task_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "scan", Some("task = \"cz\"\n"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn degenerate_cz_is_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "cz", None, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_tolerance_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "integrate", None, &["--tol", "-1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn perturbed_cz_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[metric]\ncoefficients = [[2, 0, 0.05], [2, 2, 0.015]]\n";
    let out = run_in(dir.path(), "cz", Some(cfg), &[]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let t = table(&dir.path().join("out/cz.toml"));
    assert_eq!(t["cz_index"].as_integer(), Some(3));
    assert_eq!(t["parity"].as_bool(), Some(true));
    let (lo, hi) = (
        t["winding_lo"].as_float().unwrap(),
        t["winding_hi"].as_float().unwrap(),
    );
    assert!(lo < hi && hi - lo <= 0.5);
}

#[test]
fn scan_is_deterministic_and_records_revalidate() {
    let cfg = "seed = 11\n[scan]\nterms = [[2, 0, 1.0], [2, 2, 0.3]]\nepsilons = [0.0, 0.04]\njitter = 1e-3\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run_in(d.path(), "scan", Some(cfg), &[]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let csv = |d: &tempfile::TempDir| fs::read(d.path().join("out/scan.csv")).unwrap();
    assert_eq!(csv(&a), csv(&b));

    let text = String::from_utf8(csv(&a)).unwrap();
    let round_rows: Vec<_> = text.lines().filter(|l| l.starts_with("0.0,")).collect();
    assert_eq!(round_rows.len(), 6);
    for row in round_rows {
        let f: Vec<_> = row.split(',').collect();
        assert_eq!(f[3], "degenerate", "{row}");
        assert_eq!(f[10], "", "{row}");
    }

    let records = fs::read_dir(a.path().join("out/records")).unwrap();
    let mut n = 0;
    for entry in records {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        ClosedOrbitRecord::from_toml(&text).unwrap();
        n += 1;
    }
    assert_eq!(n, 12);
    let summary = table(&a.path().join("out/scan.toml"));
    assert_eq!(summary["parity_failures"].as_integer(), Some(0));
}

#[test]
fn trajectory_csv_is_reproducible() {
    let cfg = "[metric]\ncoefficients = [[3, 1, 0.02]]\n[integrate]\nchart = \"sphere\"\nq0 = [0.5, 0.5, 0.5, 0.5]\nduration = 5.0\nsamples = 50\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        assert!(run_in(d.path(), "integrate", Some(cfg), &[])
            .status
            .success());
    }
    let read =
        |d: &tempfile::TempDir| fs::read_to_string(d.path().join("out/trajectory.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    let text = read(&a);
    assert!(text.starts_with("t,chart,q0,q1,q2,q3,res_norm,res_reeb"));
    assert_eq!(text.lines().count(), 52);
}
