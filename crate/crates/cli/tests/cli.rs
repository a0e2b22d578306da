use std::path::PathBuf;
use std::process::{Command, Output};

fn sja(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sja"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn sja_threads(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sja"))
        .args(args)
        .env("SJA_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sja-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

const COMMANDS: &[&[&str]] = &[
    &["prices", "--items", "3", "--samples", "20000", "--seed", "7"],
    &["certify", "--items", "2", "--grid", "21"],
    &["certify", "--items", "2", "--grid", "21", "--format", "csv"],
    &["revenue", "--items", "2"],
    &["revenue", "--items", "4", "--method", "mc", "--samples", "20000", "--seed", "3"],
    &["deficiency-scan", "--items", "2", "--grid", "8"],
    &["myerson", "--dist", "uniform:1:2"],
    &["nonregular", "--format", "csv"],
    &["nonregular", "--format", "text"],
];

#[test]
fn every_command_is_byte_identical_across_runs() {
    for args in COMMANDS {
        let a = sja(args);
        let b = sja(args);
        assert_eq!(a.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert!(!a.stdout.is_empty(), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn thread_count_does_not_change_output() {
    for args in COMMANDS {
        let one = sja_threads(args, "1");
        let four = sja_threads(args, "4");
        assert_eq!(one.stdout, four.stdout, "{args:?}");
    }
}

#[test]
fn prices_report_lists_parameters() {
    let v = json(&sja(&["prices", "--items", "2", "--samples", "10000"]));
    let mu = v["mu"].as_array().unwrap();
    assert_eq!(mu[0].as_f64().unwrap(), 1.0);
    assert!((mu[1].as_f64().unwrap() - (2.0 + 2f64.sqrt())).abs() < 1e-9);
    assert_eq!(v["conjectural"], false);
    assert_eq!(v["slice_check"]["pass"], true);
    assert!(v["notes"].is_array());
    assert_eq!(v["p"].as_array().unwrap().len(), 2);
}

#[test]
fn seven_items_are_flagged_conjectural() {
    let v = json(&sja(&["prices", "--items", "7", "--samples", "1000"]));
    assert_eq!(v["conjectural"], true);
}

#[test]
fn certify_writes_json_and_coloring() {
    let out = sja(&["certify", "--items", "1", "--grid", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["N"], 10);
    assert_eq!(v["pass"], true);
    assert!((v["revenue"].as_f64().unwrap() - 0.25).abs() < 1e-12);

    let path = tmp("coloring.csv");
    let out = sja(&[
        "certify", "--items", "2", "--grid", "21", "--format", "csv", "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("c1,c2,color"));
    assert_eq!(lines.count(), 21 * 21);
}

#[test]
fn usage_errors_exit_with_one() {
    for args in [
        &["certify", "--items", "2", "--grid", "100"][..],
        &["prices", "--items", "2", "--bogus"],
        &["revenue", "--items", "4"],
        &["revenue", "--items", "2", "--method", "simplex"],
        &["certify", "--items", "4", "--grid", "5"],
        &["deficiency-scan", "--items", "3", "--grid", "9"],
        &["prices", "--items", "0"],
        &["myerson", "--dist", "cauchy"],
        &["frobnicate"],
    ] {
        let out = sja(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
    }
}

#[test]
fn bad_thread_variable_is_a_usage_error() {
    let out = sja_threads(&["revenue", "--items", "1"], "zero");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn non_regular_myerson_is_a_verification_failure() {
    let out = sja(&["myerson", "--dist", "nonregular-demo"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn deficiency_scan_writes_witness() {
    let path = tmp("witness.rle");
    let out = sja(&[
        "deficiency-scan", "--items", "2", "--grid", "6", "--witness",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["pass"], true);
    let body = sja_core::geometry::VoxelBody::from_rle(&std::fs::read_to_string(&path).unwrap())
        .unwrap();
    assert_eq!(body.count() as u64, v["witness_cells"].as_u64().unwrap());
}

#[test]
fn nonregular_table_has_all_rows() {
    let out = sja(&["nonregular", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,R,-R',z,z0,z1"));
    assert_eq!(lines.count(), sja_core::distributions::DEMO_TABLE_ROWS);
}

#[test]
fn help_exits_cleanly() {
    let out = sja(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("certify"));
}
