//! End-to-end checks of the installed binary: exit codes, file outputs,
//! and byte-level determinism of the CSV artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mdfc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mdfc"))
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Value of `column` in the first data row of a one-row-per-case CSV.
fn csv_value(text: &str, column: &str) -> f64 {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header
        .iter()
        .position(|h| *h == column)
        .unwrap_or_else(|| panic!("no column '{column}' in {header:?}"));
    lines.next().unwrap().split(',').nth(idx).unwrap().parse().unwrap()
}

const COLUMN_CFG: &str = "[case]
geometry = quasi1d
method = tpfa
nx = 8

[fracture]
kappa_perp = 1
kappa_par = 1
";

#[test]
fn run_reports_series_flux_and_writes_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "case.cfg", COLUMN_CFG);
    let out_dir = dir.path().join("out");

    let out = mdfc()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    // Unit pressure drop across unit matrix with one orthogonal fracture at
    // kappa_perp = 1: three unit resistances in series.
    let q = csv_value(&summary, "inflow");
    assert!((q - 1.0 / 3.0).abs() < 1e-10, "total flux {q}");
    assert!(csv_value(&summary, "residual_max") < 1e-9);

    for name in ["fields_sub000.vtk", "fields_sub001.vtk", "fields_sub002.vtk", "interface_flux.vtk"]
    {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    assert!(stdout(&out).contains("summary.csv"));
}

#[test]
fn unknown_method_exits_2_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "bad.cfg",
        "[case]\ngeometry = quasi1d\nmethod = upwind\nnx = 8\n",
    );
    let out = mdfc().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("unknown method"), "stderr: {err}");
    assert!(err.contains("Usage:"), "stderr: {err}");
}

#[test]
fn missing_config_exits_1() {
    let out = mdfc().args(["run", "--config", "no/such/file.cfg"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no/such/file.cfg"));
}

#[test]
fn too_few_levels_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "case.cfg", COLUMN_CFG);
    let out = mdfc()
        .args(["converge", "--levels", "2", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("at least 3 levels"));
}

#[test]
fn converge_writes_a_row_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "case.cfg", COLUMN_CFG);
    let out_dir = dir.path().join("study");

    let out = mdfc()
        .args(["converge", "--levels", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let text = std::fs::read_to_string(out_dir.join("convergence.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 1 + 3, "header plus one row per level: {text}");
    // The column case has a constant interface flux, so every level is
    // already at round-off level.
    for row in &rows[1..] {
        let err: f64 = row.split(',').nth(8).unwrap().parse().unwrap();
        assert!(err < 1e-8, "row {row}");
    }
}

#[test]
fn stability_covers_the_parameter_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "case.cfg", COLUMN_CFG);
    let out_dir = dir.path().join("sweep");

    let out = mdfc()
        .args(["stability", "--kperp", "1e-2,1e-1", "--kpar", "1", "--ratios", "0.75,1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let text = std::fs::read_to_string(out_dir.join("stability.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 1 + 4, "header plus one row per tuple: {text}");
    for row in &rows[1..] {
        let n_min: f64 = row.split(',').next_back().unwrap().parse().unwrap();
        assert!(n_min > 0.0, "row {row}");
    }
}

#[test]
fn csv_outputs_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "case.cfg", COLUMN_CFG);

    let sweep = |threads: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = mdfc()
            .args(["stability", "--kperp", "1e-3,1e-2,1e-1", "--kpar", "0.5,2", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .env("MDFC_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        std::fs::read(out_dir.join("stability.csv")).unwrap()
    };

    let serial = sweep("1", "serial");
    let parallel = sweep("3", "parallel");
    let again = sweep("3", "again");
    assert_eq!(serial, parallel, "worker count changed the table");
    assert_eq!(parallel, again, "repeat run changed the table");

    let run = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = mdfc()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        std::fs::read(out_dir.join("summary.csv")).unwrap()
    };
    assert_eq!(run("first"), run("second"), "repeat solve changed the summary");
}
