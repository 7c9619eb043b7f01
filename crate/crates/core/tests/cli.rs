use std::path::Path;
use std::process::{Command, Output};

fn forge(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dispersive-forge"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("DISPERSIVE_FORGE_THREADS")
        .output()
        .unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn solve_writes_artifacts_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = forge(
        &["solve", "--preset", "kdv", "--N", "128", "--t-end", "0.1", "--dt-out", "0.05", "--delta", "0.2", "--couple-eps"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["manifest.json", "trajectory.csv", "diagnostics.csv", "snapshots.bin", "summary.json", "solution_norms.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&read(&out.join("summary.json"))).unwrap();
    assert_eq!(summary["termination"], "reached_t_end");
    assert!((summary["epsilon"].as_f64().unwrap() - 0.2f64.powi(5)).abs() < 1e-18);
    // Three snapshots of 128 points plus the header.
    assert_eq!(read(&out.join("trajectory.csv")).lines().count(), 3 * 128 + 1);

    let again = dir.path().join("again");
    let o = forge(&["solve", "--manifest", out.join("manifest.json").to_str().unwrap()], &again);
    assert!(o.status.success());
    // The manifest pins its own output directory.
    assert!(!again.exists());
    let bin_before = std::fs::read(out.join("snapshots.bin")).unwrap();
    let o = forge(&["solve", "--manifest", out.join("manifest.json").to_str().unwrap()], &again);
    assert!(o.status.success());
    assert_eq!(std::fs::read(out.join("snapshots.bin")).unwrap(), bin_before);
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = forge(&["solve", "--preset", "burgers"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("burgers") && err.contains("kdv") && err.contains("linear_gauged"), "{err}");
}

#[test]
fn argument_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(forge(&["solve"], dir.path()).status.code(), Some(1));
    assert_eq!(forge(&["solve", "--preset", "kdv", "--N", "7"], dir.path()).status.code(), Some(1));
    assert_eq!(forge(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(
        forge(&["solve", "--preset", "kdv", "--couple-eps", "--eps", "0.1", "--delta", "0.1"], dir.path())
            .status
            .code(),
        Some(1)
    );
    let cfg = dir.path().join("x.toml");
    std::fs::write(&cfg, "name = \"x\"\nf = \"-z3\"\n").unwrap();
    let both = forge(&["solve", "--preset", "kdv", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(both.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_dispersive-forge")).arg("--help").output().unwrap();
    assert!(o.status.success());
}

#[test]
fn bad_thread_env_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dispersive-forge"))
        .args(["coeff-audit", "--preset", "kdv", "--out"])
        .arg(dir.path())
        .env("DISPERSIVE_FORGE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    // The flag wins over the environment.
    let o = Command::new(env!("CARGO_BIN_EXE_dispersive-forge"))
        .args(["coeff-audit", "--preset", "kdv", "--threads", "2", "--out"])
        .arg(dir.path())
        .env("DISPERSIVE_FORGE_THREADS", "many")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn coeff_audit_lists_fifty_nine_terms() {
    let dir = tempfile::tempdir().unwrap();
    let o = forge(&["coeff-audit", "--preset", "k22"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&dir.path().join("terms.csv")).lines().count(), 60);
    let audit: serde_json::Value = serde_json::from_str(&read(&dir.path().join("coeff_audit.json"))).unwrap();
    assert_eq!(audit["appendix_matched"], 59);
}

#[test]
fn gauge_audit_flags_the_pilod_equation() {
    let dir = tempfile::tempdir().unwrap();
    let o = forge(&["gauge-audit", "--preset", "pilod_illposed"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let adm: serde_json::Value = serde_json::from_str(&read(&dir.path().join("admissibility.json"))).unwrap();
    assert_eq!(adm["a2"]["passed"], false);

    let ok = dir.path().join("kdv");
    let o = forge(&["gauge-audit", "--preset", "kdv", "--N", "128", "--t-end", "0.05"], &ok);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ok.join("energy_ledger.csv").exists());
}

#[test]
fn mollify_report_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = forge(&["mollify-report", "--preset", "kdv", "--deltas", "0.25,0.125"], dir.path());
    assert!(o.status.success());
    let csv = read(&dir.path().join("mollifier.csv"));
    assert_eq!(csv.lines().next().unwrap(), "delta,h7,h8,h9,h10,h11,l2_diff,h7_diff");
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn ladder_and_probe_run() {
    let dir = tempfile::tempdir().unwrap();
    let l = dir.path().join("ladder");
    let o = forge(&["ladder", "--preset", "kdv", "--dt-out", "2.5e-3"], &l);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(l.join("ladder_report.json").exists());
    let p = dir.path().join("probe");
    let o = forge(&["depend-probe", "--preset", "kdv", "--N", "128", "--seed", "3"], &p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&p.join("dependence.csv")).lines().count(), 5);
}

#[test]
fn blowup_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = forge(&["solve", "--preset", "linear_backwards", "--N", "32", "--L", "6.283185307179586", "--t-end", "5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let summary: serde_json::Value = serde_json::from_str(&read(&dir.path().join("summary.json"))).unwrap();
    assert_eq!(summary["termination"], "blowup_detected");
}
