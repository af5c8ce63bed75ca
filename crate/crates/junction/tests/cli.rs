use std::path::{Path, PathBuf};
use std::process::Command;

use junction::output::AGGREGATE_FILE;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_junction"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.json"))
}

#[test]
fn malformed_scenario_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("no_traffic")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["junction"]["s_stop"] = serde_json::json!("near");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = bin().arg("run").arg(&bad).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "parse");
    assert_eq!(err["field"], "junction.s_stop");
}

#[test]
fn invalid_value_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenario("no_traffic")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["rules"]["p_risk_max"] = serde_json::json!(1.5);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let out = bin().arg("run").arg(&bad).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "invalid_config");
    assert_eq!(err["field"], "rules.p_risk_max");
}

#[test]
fn incompatible_hz_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("run")
        .arg(scenario("no_traffic"))
        .args(["--hz", "7", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["field"], "plan_hz");
}

#[test]
fn three_empty_road_runs_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("run")
        .arg(scenario("no_traffic"))
        .args(["--reps", "3", "--seed", "5", "--out"])
        .arg(dir.path())
        .env("JUNCTION_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for seed in 5..8 {
        for suffix in [".csv", ".candidates.json", ".metrics.json", ".planning_times.txt"] {
            assert!(dir.path().join(format!("no_traffic_seed{seed}{suffix}")).is_file());
        }
    }
    let mut rdr = csv::Reader::from_path(dir.path().join(AGGREGATE_FILE)).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let t_f: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    for r in &rows {
        assert_eq!(&r[2], "no_traffic");
        assert!(r[4].parse::<f64>().unwrap() > 0.0);
    }
    let spread = t_f.iter().cloned().fold(f64::MIN, f64::max) - t_f.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 0.15, "{t_f:?}");

    let traj = std::fs::read_to_string(dir.path().join("no_traffic_seed5.csv")).unwrap();
    assert!(traj.starts_with("t,x,y,phi,v,a,delta,a_perp,d_perp,s,d_lane,ego_objects,ext_objects\n"));

    let rep = bin().arg("report").arg(dir.path()).output().unwrap();
    assert!(rep.status.success());
    let text = String::from_utf8(rep.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("no_traffic ")), "{text}");
    assert!(dir.path().join("report.csv").is_file());
}

#[test]
fn report_on_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("report").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "empty_batch");
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = bin()
            .arg("run")
            .arg(scenario("merge_before"))
            .args(["--seed", "3", "--out"])
            .arg(d.path())
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    for f in ["merge_before_seed3.csv", "merge_before_seed3.candidates.json", "merge_before_seed3.metrics.json", AGGREGATE_FILE] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}
