use std::path::Path;
use std::process::{Command, Output};

fn ubn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ubn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run ubn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn csv_field(path: &Path, column: &str, row: usize) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap_or_else(|| panic!("no column {column}"));
    let line = lines.nth(row).unwrap();
    line.split(',').nth(idx).unwrap().to_string()
}

#[test]
fn ubn_annulus_moderate_rotation_converges() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ubn(tmp.path(), &["solve", "--f", "0.3", "--out-dir", "out", "--trace"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let res = tmp.path().join("out/results.csv");
    assert_eq!(csv_field(&res, "status", 0), "Converged");
    assert_eq!(csv_field(&res, "is_iterations", 0), "1");
    let nm: usize = csv_field(&res, "newton_iterations", 0).parse().unwrap();
    assert!((3..=8).contains(&nm), "NM = {nm}");
    for f in ["deformed.svg", "newton_trace.csv", "untangle_trace.csv"] {
        assert!(tmp.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn extreme_rotation_exits_with_method_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ubn(tmp.path(), &["solve", "--f", "0.8", "--out-dir", "."]);
    assert_eq!(code(&o), 2);
    assert_eq!(csv_field(&tmp.path().join("results.csv"), "status", 0), "UntangleFailed");
}

#[test]
fn malformed_config_value_exits_one_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.cfg"), "method = continuation\neta = abc\n").unwrap();
    let o = ubn(tmp.path(), &["solve", "--config", "run.cfg"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("'eta'"));
}

#[test]
fn unknown_config_key_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.cfg"), "rotation = 0.3\n").unwrap();
    let o = ubn(tmp.path(), &["solve", "--config", "run.cfg"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("'rotation'"));
    assert_eq!(code(&ubn(tmp.path(), &["solve", "--no-such-flag"])), 1);
}

#[test]
fn command_line_overrides_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.cfg"), "f = 0.8\nnodes = 80\n").unwrap();
    assert_eq!(code(&ubn(tmp.path(), &["solve", "--config", "run.cfg", "--f", "0.1"])), 0);
    assert_eq!(code(&ubn(tmp.path(), &["solve", "--config", "run.cfg", "--set", "f=0.1"])), 0);
}

#[test]
fn generated_mesh_round_trips_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&ubn(tmp.path(), &["gen-annulus", "--nodes", "100", "--out", "m/ann"])), 0);
    let o = ubn(tmp.path(), &["check-mesh", "--mesh", "m/ann"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("annulus radii"));
    let o = ubn(
        tmp.path(),
        &["solve", "--mesh", "m/ann", "--f", "0.1", "--method", "continuation", "--trace"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(tmp.path().join("continuation_trace.csv").exists());
    assert_eq!(code(&ubn(tmp.path(), &["check-mesh", "--mesh", "m/missing"])), 1);
}

#[test]
fn bench_annulus_zero_rotation_row() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ubn(tmp.path(), &["bench-annulus", "--f", "0", "--nodes", "80"]);
    assert_eq!(code(&o), 0);
    let res = tmp.path().join("results.csv");
    assert!(csv_field(&res, "ubn_als", 0).parse::<usize>().unwrap() <= 2);
    assert!(csv_field(&res, "cont_1/3_als", 0).parse::<usize>().unwrap() <= 2);
    assert!(csv_field(&res, "cont_1.2_als", 0).parse::<usize>().unwrap() <= 2);
    assert!(tmp.path().join("annulus_f0.svg").exists());
}

#[test]
fn bench_3d_zero_pull_on_small_bar() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ubn(
        tmp.path(),
        &["bench-3d", "--pulls", "0", "--set", "cells=2,2,4", "--set", "lengths=1,1,2"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let res = tmp.path().join("results.csv");
    assert_eq!(csv_field(&res, "ubn_status", 0), "Converged");
    assert!(csv_field(&res, "ubn_als", 0).parse::<usize>().unwrap() <= 2);
    assert!(csv_field(&res, "cont_1/3_als", 0).parse::<usize>().unwrap() <= 2);
    assert!(tmp.path().join("pull_0.vtk").exists());
}

#[test]
fn sliver_bar_reports_stall_and_inversion_markers() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ubn(
        tmp.path(),
        &[
            "bench-3d",
            "--pulls",
            "2.4",
            "--direction",
            "1,0,1",
            "--sliver-flatness",
            "0.001",
            "--set",
            "cells=4,4,12",
            "--set",
            "lengths=2,2,6",
        ],
    );
    assert_eq!(code(&o), 0);
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("---") && table.contains("***"), "{table}");
    assert_eq!(csv_field(&tmp.path().join("results.csv"), "ubn_status", 0), "Converged");
}
