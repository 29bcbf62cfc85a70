use std::fs;
use std::path::Path;
use std::process::Command;

use lte_pss::channel::{embed_pss, ChannelScenario};
use lte_pss::clustering::{conjugate_table, ClusterTable};
use lte_pss::pss::{add_cyclic_prefix, pss_time_domain};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pss-sim"))
}

fn run_ok(args: &[&str], out: &Path) {
    let o = bin().args(args).arg("--output-dir").arg(out).output().unwrap();
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn write_config(dir: &Path, json: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, json).unwrap();
    p
}

#[test]
fn gen_pss_emits_three_roots_deterministically() {
    let d = tempfile::tempdir().unwrap();
    run_ok(&["gen-pss"], d.path());
    for u in [25, 29, 34] {
        let csv = fs::read_to_string(d.path().join(format!("pss_u{u}_N128.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 129);
        assert_eq!(fs::metadata(d.path().join(format!("pss_u{u}_N128.iq"))).unwrap().len(), 128 * 16);
    }
    let first = fs::read(d.path().join("pss_u25_N128.csv")).unwrap();
    run_ok(&["gen-pss"], d.path());
    assert_eq!(fs::read(d.path().join("pss_u25_N128.csv")).unwrap(), first);
    let csv = lte_pss::io::read_waveform_csv(d.path().join("pss_u29_N128.csv")).unwrap();
    assert_eq!(csv, pss_time_domain(29, 128).unwrap().body());
}

#[test]
fn cluster_tables() {
    let d = tempfile::tempdir().unwrap();
    run_ok(&["cluster", "--engine", "cluster", "--clusters", "16"], d.path());
    let t29 = ClusterTable::load(d.path().join("table_u29_N128_K16.json")).unwrap();
    let t34 = ClusterTable::load(d.path().join("table_u34_N128_K16.json")).unwrap();
    t29.validate().unwrap();
    assert_eq!(conjugate_table(&t29).unwrap(), t34);
    run_ok(&["cluster", "--engine", "cluster", "--clusters", "128"], d.path());
    let full = ClusterTable::load(d.path().join("table_u25_N128_K128.json")).unwrap();
    assert_eq!(full.final_wwcss(), 0.0);
}

#[test]
fn bench_ops_counts() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        r#"{"engine": "mf_brute", "oversample": 1, "N": 64,
            "extra_engines": [
              {"engine": "mf_opt", "oversample": 1},
              {"engine": "mf_opt", "oversample": 2},
              {"engine": "cluster", "K": 8, "oversample": 2}
            ]}"#,
    );
    run_ok(&["bench-ops", "--config", cfg.to_str().unwrap()], d.path());
    let csv = fs::read_to_string(d.path().join("ops.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let cm: Vec<(&str, &str, &str)> = rows.iter().map(|r| (r[0], r[1], r[6])).collect();
    assert_eq!(cm[0], ("mf_brute", "64", "64"));
    assert_eq!(cm[1], ("mf_opt", "64", "33"));
    assert_eq!(cm[2], ("mf_opt", "128", "65"));
    assert_eq!(cm[3], ("cluster", "128", "8"));
}

#[test]
fn pmd_rows_and_replay() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        r#"{"engine": "mf_opt", "oversample": 1, "N": 64,
            "extra_engines": [{"engine": "cluster", "K": 8, "oversample": 2}],
            "snr_grid": [-10.0, -6.0, -2.0], "trials": 200, "calibration_trials": 1000, "seed": 4}"#,
    );
    let out = d.path().join("run");
    run_ok(&["pmd", "--config", cfg.to_str().unwrap()], &out);
    let csv = fs::read_to_string(out.join("pmd.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "snr_db,engine,K,oversample,trials,misses,pmd,ci_lo,ci_hi");
    assert_eq!(lines.len(), 1 + 3 * 2);

    let again = d.path().join("again");
    let o = bin()
        .args(["replay", "--manifest"])
        .arg(out.join("manifest-pmd.json"))
        .arg("--output-dir")
        .arg(&again)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(fs::read(again.join("pmd.csv")).unwrap(), csv.as_bytes());

    fs::write(out.join("pmd.csv"), "tampered").unwrap();
    let mut m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest-pmd.json")).unwrap()).unwrap();
    m["files"][0]["sha256"] = "00".into();
    fs::write(out.join("manifest-pmd.json"), m.to_string()).unwrap();
    let o = bin().args(["replay", "--manifest"]).arg(out.join("manifest-pmd.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn jobs_do_not_change_results() {
    let d = tempfile::tempdir().unwrap();
    let args = ["pmd", "--snr=-8,-4", "--trials", "150", "--oversample", "1"];
    let cfg = write_config(d.path(), r#"{"calibration_trials": 1000, "oversample": 1, "N": 64}"#);
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    let c = cfg.to_str().unwrap();
    run_ok(&[&args[..], &["--config", c, "--jobs", "1"]].concat(), &a);
    run_ok(&[&args[..], &["--config", c, "--jobs", "3"]].concat(), &b);
    assert_eq!(fs::read(a.join("pmd.csv")).unwrap(), fs::read(b.join("pmd.csv")).unwrap());
}

#[test]
fn detect_reports_truth() {
    let d = tempfile::tempdir().unwrap();
    let w = add_cyclic_prefix(&pss_time_domain(25, 128).unwrap(), 9).unwrap();
    let rx = embed_pss(&w, &ChannelScenario::awgn(5.0).with_timing_offset(30).with_seed(2), 256).unwrap();
    let input = d.path().join("rx.iq");
    rx.save(&input).unwrap();
    let cfg = write_config(d.path(), r#"{"calibration_trials": 1000}"#);
    let out = d.path().join("out");
    let o = bin()
        .args(["detect", "--config", cfg.to_str().unwrap(), "--input"])
        .arg(&input)
        .arg("--output-dir")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("detection.json")).unwrap()).unwrap();
    assert_eq!(report[0]["correct"], true);
    assert_eq!(report[0]["result"]["root_hat"], 25);
}

#[test]
fn acq_cdf_is_monotone() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        r#"{"trials": 20, "calibration_trials": 1000, "max_half_frames": 10, "channel": {"snr_db": -5.0, "cfo_ppm": 0.1}}"#,
    );
    run_ok(&["acq", "--config", cfg.to_str().unwrap()], d.path());
    let csv = fs::read_to_string(d.path().join("acq_cdf.csv")).unwrap();
    assert!(csv.starts_with("engine,K,oversample,ppm,time_ms,cdf\n"));
    let cdf: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[4].parse().unwrap(), f[5].parse().unwrap())
        })
        .collect();
    assert!(!cdf.is_empty());
    assert!(cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    assert!(cdf.last().unwrap().1 <= 1.0 && cdf[0].0 >= 5.0);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| bin().args(args).arg("--output-dir").arg(d.path()).output().unwrap().status.code();
    assert_eq!(code(&["bench-ops", "--engine", "cluster"]), Some(1));
    assert_eq!(code(&["bench-ops", "--oversample", "3"]), Some(1));
    assert_eq!(code(&["no-such-command"]), Some(1));
    assert_eq!(code(&["pmd", "--snr=-4,-8"]), Some(1));
    let bad = write_config(d.path(), r#"{"trails": 3}"#);
    assert_eq!(code(&["pmd", "--config", bad.to_str().unwrap()]), Some(1));
    assert_eq!(code(&["detect"]), Some(1));
    assert_eq!(code(&["detect", "--input", "/nonexistent/rx.iq"]), Some(2));
    assert_eq!(code(&["--help"]), Some(0));

    let o = bin()
        .args(["pmd", "--engine", "mf_opt", "--clusters", "8", "--oversample", "3"])
        .output()
        .unwrap();
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("engine.K") && err.contains("engine.oversample"), "{err}");
}
