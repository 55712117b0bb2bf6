use std::process::Command;

use atomlaser_cli::output::body;
use atomlaser_cli::preset::{self, Axis};
use atomlaser_cli::runner::{execute, run_scan, write_run, PointStatus};
use atomlaser_cli::{ConfigFile, RunConfig, RunOptions, ScanRequest};

fn small(lambda: f64) -> RunConfig {
    let mut cfg = preset::find("mark-P-b").unwrap().config;
    cfg.physical.outcoupling = lambda;
    cfg.grid.modes = 300;
    cfg.evolution.t_end = 4.0;
    cfg.evolution.pulse_duration = 4.0;
    cfg
}

fn scratch(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("atomlaser-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn scan_output_is_independent_of_worker_count() {
    let mut req = ScanRequest {
        base: small(100.0),
        axis: Axis::Eta,
        values: vec![1.6, 1.7, 1.8, 2.0, 2.2],
        workers: 1,
        options: RunOptions::default(),
    };
    let one = run_scan(&req).unwrap();
    req.workers = 4;
    let four = run_scan(&req).unwrap();
    assert_eq!(one.csv(), four.csv());
    for (a, b) in one.points.iter().zip(&four.points) {
        let (a, b) = (a.outcome.as_ref().unwrap(), b.outcome.as_ref().unwrap());
        assert_eq!(a.manifest.content_hash, b.manifest.content_hash);
    }
    let (d1, d4) = (scratch("w1"), scratch("w4"));
    one.write(&d1).unwrap();
    four.write(&d4).unwrap();
    for f in ["eta=1.7/timeseries.csv", "eta=1.7/spectrum.csv", "scan.csv"] {
        let x = std::fs::read(d1.join(f)).unwrap();
        let y = std::fs::read(d4.join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cfg = small(2000.0);
    let a = execute("x", &cfg, &RunOptions::default()).unwrap();
    let b = execute("x", &cfg, &RunOptions::default()).unwrap();
    assert_eq!(a.manifest.content_hash, b.manifest.content_hash);
    assert!(a.manifest.verify());
    let (da, db) = (scratch("ra"), scratch("rb"));
    write_run(&da, &a).unwrap();
    write_run(&db, &b).unwrap();
    for f in ["timeseries.csv", "spectrum.csv", "spectrum_low.csv"] {
        let x = std::fs::read_to_string(da.join(f)).unwrap();
        assert_eq!(x, std::fs::read_to_string(db.join(f)).unwrap());
        assert!(x.starts_with(&format!("# manifest: {}\n", a.manifest.content_hash)));
    }
}

#[test]
fn failed_points_are_isolated() {
    let req = ScanRequest {
        base: small(100.0),
        axis: Axis::Eta,
        values: vec![1.7, -1.0, -2.0],
        workers: 2,
        options: RunOptions::default(),
    };
    let r = run_scan(&req).unwrap();
    assert_eq!(r.points[0].status, PointStatus::Unjudged);
    assert!(r.points[0].outcome.is_ok());
    assert_eq!(r.points[1].status, PointStatus::Failed);
    assert_eq!(r.points[2].status, PointStatus::Failed);
    let csv = r.csv();
    assert_eq!(csv.lines().filter(|l| l.contains(",failed,")).count(), 2);
}

#[test]
fn single_point_scan_reduces_to_run() {
    let cfg = small(500.0);
    let req = ScanRequest {
        base: cfg.clone(),
        axis: Axis::Lambda,
        values: vec![500.0],
        workers: 1,
        options: RunOptions::default(),
    };
    let scan = run_scan(&req).unwrap();
    let point = scan.points[0].outcome.as_ref().unwrap();
    let run = execute("direct", &cfg, &RunOptions::default()).unwrap();
    assert_eq!(point.series, run.series);
    assert_eq!(point.spectrum, run.spectrum);
    assert_eq!(point.manifest.body.config, run.manifest.body.config);
    assert_eq!(
        point.manifest.body.diagnostics,
        run.manifest.body.diagnostics
    );
}

#[test]
fn empty_continuum_gives_zero_spectrum_file() {
    let text = "preset = \"mark-S-b\"\noutcoupling_per_sec2 = 0.0\nmodes = 400\nt_end_sec = 3.0\npulse_duration_sec = 3.0\n";
    let cfg = ConfigFile::parse(text).unwrap().resolve().unwrap();
    let out = execute("zero", &cfg, &RunOptions::default()).unwrap();
    let dir = scratch("zero");
    write_run(&dir, &out).unwrap();
    let csv = std::fs::read_to_string(dir.join("spectrum.csv")).unwrap();
    let rows: Vec<&str> = body(&csv).lines().skip(1).collect();
    assert_eq!(rows.len(), 400);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(&cols[1..], &["0.0", "0.0"], "{row}");
    }
    assert_eq!(out.manifest.body.grid.shift, 0.0);
}

#[test]
fn recurrence_violation_is_rejected() {
    let mut cfg = small(100.0);
    cfg.grid.modes = 100;
    cfg.evolution.t_end = 10.0;
    let err = execute("x", &cfg, &RunOptions::default()).unwrap_err();
    assert!(format!("{err:#}").contains("recurrence"), "{err:#}");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_atomlaser"))
}

#[test]
fn derive_prints_table_and_reports_parse_errors() {
    let out = bin()
        .args(["derive", "--preset", "mark-P-b"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("N_max") && text.contains("2495.8"), "{text}");
    assert!(text.contains("6.6935"));

    let dir = scratch("cfg");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.toml");
    std::fs::write(&path, "eta = 1.7\nomega_z = 200.0\n").unwrap();
    let out = bin()
        .args(["derive", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("omega_z") && err.contains("line 2"), "{err}");

    std::fs::write(&path, "outcoupling_per_sec2 = 0.0\n").unwrap();
    let out = bin()
        .args(["derive", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("S [1/s]                  0.000000e0"));

    let out = bin().args(["derive", "--preset", "nope"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn run_honours_output_root_environment() {
    let root = scratch("env");
    let out = bin()
        .args([
            "run", "--preset", "mark-P-b", "--modes", "300", "--t-end", "2", "--tau", "2",
        ])
        .env("ATOMLASER_OUT", &root)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "manifest.json",
        "timeseries.csv",
        "spectrum.csv",
        "spectrum_low.csv",
    ] {
        assert!(root.join("mark-P-b").join(f).exists(), "{f}");
    }
    let m: atomlaser_cli::RunManifest = serde_json::from_str(
        &std::fs::read_to_string(root.join("mark-P-b/manifest.json")).unwrap(),
    )
    .unwrap();
    assert!(m.verify());
    assert_eq!(m.body.config.grid.modes, 300);
}
