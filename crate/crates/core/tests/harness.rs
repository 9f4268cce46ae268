use std::path::{Path, PathBuf};
use std::process::Command;

use hydrolimit::harness::{self, ExperimentConfig};

const SMALL: &str = r#"
kind = "converge"
id = "small"

[model]
dim = 1
alpha = ["0.65", "0.55"]
beta = ["0.25", "0.35"]
initial = ["1.2 - 0.6*x", "0.05 - 0.1*x"]

[numerics]
n = [8, 16]
replicas = 12
t_end = 0.02
snapshot_times = [0.01, 0.02]
pde_m = 32

[seeds]
root = 99
"#;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn replay_is_byte_identical_across_thread_counts() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    harness::run(&cfg, Some(1)).unwrap().write(a.path()).unwrap();
    harness::run(&cfg, Some(3)).unwrap().write(b.path()).unwrap();
    for name in ["converge.csv", "converge_summary.csv"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&read(a.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["config_hash"], cfg.hash());
    assert_eq!(manifest["root_seed"], 99);
}

#[test]
fn other_seed_changes_the_output() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let mut other = cfg.clone();
    other.seeds.root = 100;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    harness::run(&cfg, Some(1)).unwrap().write(a.path()).unwrap();
    harness::run(&other, Some(1)).unwrap().write(b.path()).unwrap();
    assert_ne!(read(a.path(), "converge.csv"), read(b.path(), "converge.csv"));
}

#[test]
fn csv_rows_carry_seed_and_hash() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    harness::run(&cfg, Some(1)).unwrap().write(dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("converge.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    assert_eq!(&headers[0], "config_hash");
    assert_eq!(&headers[1], "seed");
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[0], cfg.hash());
        assert_eq!(&rec[1], "99");
        rows += 1;
    }
    assert!(rows > 0);
}

#[test]
fn shipped_configs_validate() {
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap();
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
    }
}

#[test]
fn cli_validate_exact_and_simulate() {
    let bin = env!("CARGO_BIN_EXE_hydrolimit");
    let out = Command::new(bin)
        .args(["validate", "--config"])
        .arg(configs().join("exact_d1.toml"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("hash"));

    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(bin)
        .args(["exact", "--threads", "1", "--config"])
        .arg(configs().join("exact_d1.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    for f in ["exact_checks.csv", "exact_law.csv", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }

    let small = dir.path().join("small.toml");
    std::fs::write(&small, SMALL).unwrap();
    let snaps = dir.path().join("snaps");
    let status = Command::new(bin)
        .args(["simulate", "--n", "8", "--config"])
        .arg(&small)
        .arg("--out")
        .arg(&snaps)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    for f in ["snapshot_000.bin", "snapshot_001.json", "pairings.csv"] {
        assert!(snaps.join(f).exists(), "{f}");
    }

    let missing = Command::new(bin).arg("validate").output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}
