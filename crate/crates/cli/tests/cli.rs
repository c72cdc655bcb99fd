//! Exercises the binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ebvarsel(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebvarsel")).args(args).current_dir(dir).output().unwrap()
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn version_prints_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = ebvarsel(&["version"], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ebvarsel(&["fit", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_input_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ebvarsel(&["fit", "--data", "absent.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!error_kind(&out).is_empty());
}

#[test]
fn bad_cell_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("d.csv"), "y,a,b\n1,2,3\n2,NA,4\n3,1,0\n").unwrap();
    let out = ebvarsel(&["fit", "--data", "d.csv"], dir.path());
    assert!(!out.status.success());
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("NA") || msg.contains("row"), "{msg}");
}

#[test]
fn logratio_transform_matches_hand_values() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.csv"), "a,b,c\n1,1,2\n0,1,1\n3,3,3\n").unwrap();
    let out = ebvarsel(&["transform", "--data", "c.csv", "--out", "t.csv", "--logratio", "--reference", "last"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let mut rdr = csv::Reader::from_path(dir.path().join("t.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().len(), 2);
    let rows: Vec<Vec<f64>> =
        rdr.records().map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    let half = 0.5f64.ln();
    let expect = [[half, half], [half, 0.0], [0.0, 0.0]];
    for (row, want) in rows.iter().zip(expect) {
        for (got, want) in row.iter().zip(want) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }
}

#[test]
fn simulate_writes_one_row_per_replicate() {
    let dir = tempfile::tempdir().unwrap();
    let out = ebvarsel(
        &["simulate", "--n", "40", "--replicates", "5", "--seed", "1", "--cv-repeats", "2", "--out-dir", "o"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("o/replicates.csv")).unwrap();
    assert_eq!(rdr.records().count(), 5);
    assert!(dir.path().join("o/summary.json").exists());
}

#[test]
fn fit_writes_results_and_posteriors() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("y,a,b,c\n");
    for i in 0..30 {
        let a = ((i * 7) % 11) as f64 / 5.0 - 1.0;
        let b = ((i * 3) % 13) as f64 / 6.0 - 1.0;
        let c = ((i * 5) % 17) as f64 / 8.0 - 1.0;
        text.push_str(&format!("{},{a},{b},{c}\n", 4.0 * a + 0.01 * c));
    }
    fs::write(dir.path().join("d.csv"), text).unwrap();
    let out = ebvarsel(&["fit", "--data", "d.csv", "--seed", "3", "--serial"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    let names: Vec<&str> = v["selected"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"a"), "{names:?}");
    let posteriors = fs::read_to_string(dir.path().join("posteriors.csv")).unwrap();
    assert_eq!(posteriors.lines().count(), 4);
}
