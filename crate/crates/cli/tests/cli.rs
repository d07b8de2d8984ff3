use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use egnopt::NliTables;
use serde_json::{json, Value};
use tempfile::TempDir;

fn toy(mode: &str, moments: Option<(f64, f64)>) -> Value {
    let mut modulation = json!({ "name": "pm-qpsk", "snr_req_db": 8.45 });
    if let Some((phi, psi)) = moments {
        modulation["phi"] = json!(phi);
        modulation["psi"] = json!(psi);
    }
    json!({
        "fiber": {
            "alpha_db_per_km": 0.2,
            "dispersion_ps_nm_km": 16.75,
            "gamma_w_km": 1.31,
            "span_km": 60.0,
            "spans": 2
        },
        "grid": { "f0_thz": 192.25, "delta_f_ghz": 50.0, "channels": 3, "baud_gbd": 27.5 },
        "modulation": modulation,
        "amplifier": { "n_sp": 1.77 },
        "model": { "mode": mode }
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn egnopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egnopt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn build(dir: &Path, cfg: &Path, name: &str, seed: &str) -> PathBuf {
    let out = dir.join(name);
    let r = egnopt(&["--config", s(cfg), "--seed", seed, "--tables", s(&out), "tables"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    out
}

#[test]
fn same_seed_gives_byte_identical_caches() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "egn.json", &toy("egn", None));
    let a = build(dir.path(), &cfg, "a.nlit", "7");
    let b = build(dir.path(), &cfg, "b.nlit", "7");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn gn_and_zero_moment_egn_tables_agree() {
    let dir = TempDir::new().unwrap();
    let gn = write_config(dir.path(), "gn.json", &toy("gn", None));
    let egn0 = write_config(dir.path(), "egn0.json", &toy("egn", Some((0.0, 0.0))));
    let load = |p: PathBuf| NliTables::from_bytes(&std::fs::read(p).unwrap()).unwrap();
    let a = load(build(dir.path(), &gn, "gn.nlit", "1"));
    let b = load(build(dir.path(), &egn0, "egn0.nlit", "1"));
    assert_eq!((&a.d1, &a.d2, &a.d3, &a.d4), (&b.d1, &b.d2, &b.d3, &b.d4));
}

#[test]
fn corrupted_cache_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "egn.json", &toy("egn", None));
    let path = build(dir.path(), &cfg, "t.nlit", "1");
    let mut bytes = std::fs::read(&path).unwrap();
    let k = bytes.len() / 3;
    bytes[k] ^= 0x40;
    std::fs::write(&path, &bytes).unwrap();
    let out = dir.path().join("out");
    let r = egnopt(&["--config", s(&cfg), "--tables", s(&path), "--out", s(&out), "optimize"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("checksum"));
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let mut bad = toy("egn", None);
    bad["grid"]["baud_gbd"] = json!(80.0);
    let cfg = write_config(dir.path(), "bad.json", &bad);
    let r = egnopt(&["--config", s(&cfg), "tables"]);
    assert_eq!(r.status.code(), Some(2));
    let mut unknown = toy("egn", None);
    unknown["fiber"]["colour"] = json!("blue");
    let cfg = write_config(dir.path(), "unknown.json", &unknown);
    assert_eq!(egnopt(&["--config", s(&cfg), "tables"]).status.code(), Some(2));
}

#[test]
fn optimize_sweep_and_reproduce_write_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "egn.json", &toy("egn", None));
    let out = dir.path().join("out");
    let tables = build(dir.path(), &cfg, "t.nlit", "1");
    let common = ["--config", s(&cfg), "--tables", s(&tables), "--out", s(&out)];

    let r = egnopt(&[&common[..], &["optimize"]].concat());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let sol: Value = serde_json::from_slice(&std::fs::read(out.join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["converged"], json!(true));
    let p: Vec<f64> = serde_json::from_value(sol["allocation_dbm"].clone()).unwrap();
    assert!((p[0] - p[2]).abs() < 1e-6 && p[1] > p[0]);
    let budget = std::fs::read_to_string(out.join("budget.csv")).unwrap();
    assert_eq!(budget.lines().filter(|l| !l.starts_with('#')).count(), 4);

    let r = egnopt(&[&common[..], &["sweep", "--power-range", "-5:15:1", "--input-snr", "16.7"]].concat());
    assert!(r.status.success());
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    for line in sweep.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let combined: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(combined <= 16.7);
    }

    let r = egnopt(&["--config", s(&cfg), "--out", s(&out), "--seed", "9", "reproduce", "fig3"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(out.join("fig3.csv")).unwrap();
    assert!(csv.contains("seed"));
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    for (a, b) in rows[0][2..6].iter().zip(&rows[2][2..6]) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn calibrate_lists_both_readings() {
    let r = egnopt(&["--format", "csv", "calibrate"]);
    assert!(r.status.success());
    let text = String::from_utf8_lossy(&r.stdout);
    assert!(text.contains("Double") && text.contains("Equal"));
}
