use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ddest::harness::{SimConfig, Snr, CSV_HEADER};
use tempfile::TempDir;

fn ddest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddest")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, cfg: &SimConfig) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path
}

fn small_config() -> SimConfig {
    let mut cfg = SimConfig::reference();
    cfg.sweep.snr_points_db = vec![Snr(10.0), Snr::NOISELESS];
    cfg.sweep.trials = 3;
    cfg
}

#[test]
fn sweep_writes_csv_and_ignores_thread_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &small_config());
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("sweep{threads}.csv"));
        let o = ddest(&["--threads", threads, "sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read_to_string(out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let lines: Vec<&str> = outputs[0].lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines[0], "snr_db,estimator,rmse_delay,rmse_doppler,rmse_gain,rmse_channel,miss_rate,trials");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("10,wmusic,"));
    assert!(lines[4].starts_with("inf,mp,"));
    for line in &lines[1..] {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[7], "3");
        for c in &cells[2..7] {
            assert!(c.parse::<f64>().is_ok_and(f64::is_finite), "{line}");
        }
    }
}

#[test]
fn trial_dump_contains_truth_estimates_and_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &small_config());
    let dump = dir.path().join("trial.json");
    let o = ddest(&["trial", "--config", cfg.to_str().unwrap(), "--snr", "inf", "--trial", "2", "--dump", dump.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dump).unwrap()).unwrap();
    assert_eq!(v["trial"], 2);
    assert_eq!(v["snr_db"], "inf");
    assert!(v["scenario"]["users"].as_array().unwrap().len() == 4);
    let ests = v["estimators"].as_array().unwrap();
    assert_eq!(ests.len(), 2);
    for e in ests {
        assert!(e["estimates"].as_array().is_some_and(|a| !a.is_empty()));
        assert!(e["matches"]["pairs"].is_array());
        assert!(e["flags"].is_array());
    }
}

#[test]
fn complexity_lists_every_stage() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &SimConfig::reference());
    let o = ddest(&["complexity", "--config", cfg.to_str().unwrap(), "--paths", "12"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for stage in ["C_cov", "C_EVD", "C_spec", "C_WLS", "C_root", "C_delay", "C_Hankel", "C_SVD", "C_T", "C_EVD(T)", "C_proj"] {
        assert!(text.lines().any(|l| l.split_whitespace().nth(1) == Some(stage)), "{stage} missing:\n{text}");
    }
    assert!(text.contains("wmusic     total"));
    assert!(text.contains("mp         total"));
    assert!(text.contains("2.097e8"));
}

#[test]
fn missing_config_exits_with_two() {
    let o = ddest(&["sweep", "--config", "/nonexistent/config.json", "--out", "/tmp/unused.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
}

#[test]
fn invalid_config_names_the_invariant() {
    let dir = TempDir::new().unwrap();
    let mut cfg = SimConfig::reference();
    cfg.sweep.trials = 0;
    let path = write_config(dir.path(), &cfg);
    let o = ddest(&["complexity", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("trials >= 1"));

    let mut cfg = SimConfig::reference();
    cfg.wmusic.samples = 100;
    let path = write_config(dir.path(), &cfg);
    let o = ddest(&["complexity", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("Q_sample"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_snr_is_a_usage_error() {
    let o = ddest(&["trial", "--config", "x.json", "--snr", "loud"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let o = ddest(&["selftest"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().all(|l| l.starts_with("ok ")));
}

#[test]
fn printed_config_round_trips() {
    let o = ddest(&["config"]);
    assert!(o.status.success());
    let cfg = SimConfig::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(cfg, SimConfig::reference());
}
