//! Shared helpers for driving the `coreflow` binary from integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const VALVE: &[&str] = &[
    "--input",
    "tests/fixtures/valve_like.csv",
    "--format",
    "csv",
];
pub const HURRICANE: &[&str] = &["--input", "tests/fixtures/hurricane_like.txt"];

pub fn manifest_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

pub fn coreflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coreflow"))
        .current_dir(manifest_dir())
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs with `--out` into a fresh directory and returns the report text and directory.
pub fn run_to_file(args: &[&str]) -> (String, tempfile::TempDir, i32) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.txt");
    let mut full: Vec<&str> = args.to_vec();
    let out_str = out.to_str().unwrap().to_owned();
    full.extend(["--out", &out_str]);
    let output = coreflow(&full);
    let code = output.status.code().unwrap();
    let report = fs::read_to_string(&out).unwrap_or_default();
    (report, dir, code)
}

pub fn golden_path(name: &str) -> PathBuf {
    manifest_dir()
        .join("tests/golden")
        .join(format!("{name}.txt"))
}

pub fn check_golden(name: &str, report: &str) {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, report).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(
        expected == report,
        "{name} report differs from {}",
        path.display()
    );
}

pub fn cases() -> Vec<(&'static str, Vec<&'static str>, i32)> {
    let with = |cmd: &'static str, input: &[&'static str], rest: &[&'static str]| {
        let mut v = vec![cmd];
        v.extend_from_slice(input);
        v.extend_from_slice(rest);
        v
    };
    vec![
        (
            "fit",
            with(
                "fit",
                VALVE,
                &[
                    "--threshold",
                    "49",
                    "--note",
                    "synthetic valve-like series; tail GPD(0.1215; 22.48) above 49",
                ],
            ),
            0,
        ),
        (
            "fit_mle_auto",
            with("fit", HURRICANE, &["--auto-threshold", "--method", "mle"]),
            0,
        ),
        ("compare", with("compare", VALVE, &["--threshold", "49"]), 0),
        (
            "compare_auto",
            with(
                "compare",
                HURRICANE,
                &["--auto-threshold", "--method", "mle", "--grid-points", "50"],
            ),
            0,
        ),
        (
            "gof",
            with("gof", VALVE, &["--threshold", "49", "--seed", "7"]),
            0,
        ),
        (
            "bootstrap",
            with("bootstrap", VALVE, &["--threshold", "49", "--seed", "7"]),
            0,
        ),
        (
            "bootstrap_levels",
            with(
                "bootstrap",
                HURRICANE,
                &[
                    "--threshold",
                    "80",
                    "--replicates",
                    "500",
                    "--levels",
                    "80,100,150,250",
                ],
            ),
            0,
        ),
        (
            "predict",
            with(
                "predict",
                VALVE,
                &[
                    "--threshold",
                    "49",
                    "--capacity",
                    "90",
                    "--level",
                    "30",
                    "--level",
                    "120",
                    "--arrival",
                    "40",
                    "--arrival",
                    "130",
                ],
            ),
            0,
        ),
        (
            "predict_capacity_10",
            with(
                "predict",
                VALVE,
                &["--threshold", "49", "--capacity", "10", "--level", "49"],
            ),
            0,
        ),
        (
            "select_threshold",
            with("select-threshold", HURRICANE, &[]),
            0,
        ),
        (
            "select_threshold_unstable",
            with("select-threshold", HURRICANE, &["--stability-tol", "0.01"]),
            3,
        ),
    ]
}
