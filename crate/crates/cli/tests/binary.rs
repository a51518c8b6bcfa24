use std::path::Path;
use std::process::{Command, Output};

use uplink_cli::CSV_HEADER;

fn uplink(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uplink"))
        .args(args)
        .current_dir(dir)
        .env_remove("UPLINK_THREADS")
        .output()
        .unwrap()
}

const SMALL: &str = r#"{
    "name": "small",
    "base": { "mc_trials": 100, "seed": 4, "ricean_factors_db": 3.0 },
    "sweep": { "variable": "N", "values": [8, 16] },
    "series": [{ "variable": "kappa", "values": [0.0, 0.4] }],
    "methods": ["lmmse_mc", "lmmse_thm1", "lmmse_asymptotic", "los_closed_form"],
    "report_crossover": true
}"#;

#[test]
fn no_arguments_lists_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = uplink(&[], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("fig_crossover"));
    assert_eq!(text.lines().count(), uplink_cli::presets().len());
}

#[test]
fn run_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.json.in"), SMALL).unwrap();
    let out = uplink(
        &["run", "--config", "small.json.in", "--out", "res.csv", "--threads", "2"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // 4 points, 4 methods, 10 users plus the sum, then 2 crossover rows.
    assert_eq!(rows.len(), 4 * 4 * 11 + 2);
    assert!(rows.iter().all(|r| r.len() == 7));
    let mc = rows.iter().find(|r| r[2] == "lmmse_mc:user1").unwrap();
    assert!(!mc[4].is_empty() && mc[5] == "4");
    let closed = rows.iter().find(|r| r[2] == "lmmse_closed_form:sum").unwrap();
    assert!(closed[4].is_empty());
    assert!(closed[3].parse::<f64>().unwrap() > 0.0);
    assert_eq!(closed[0], "N|kappa=0");
    assert_eq!(rows.iter().filter(|r| r[2] == "crossover").count(), 2);

    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("res.json")).unwrap()).unwrap();
    assert_eq!(sidecar["experiment"]["name"], "small");
    assert_eq!(sidecar["resolved_base"]["N"], 128);
    assert_eq!(sidecar["points"], 4);
}

#[test]
fn seed_flag_overrides_the_scenario_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("e.json"), SMALL).unwrap();
    let out = uplink(&["run", "--config", "e.json", "--out", "a.csv", "--seed", "99"], dir.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(5) == Some("99")));
}

#[test]
fn preset_with_partial_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("patch.json"),
        r#"{ "sweep": { "variable": "N", "values": [50, 75] }, "base": { "K": 4 } }"#,
    )
    .unwrap();
    let out = uplink(
        &["run", "--preset", "fig_crossover", "--config", "patch.json", "--out", "c.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    // 2 curves x 2 points x 2 methods x (4 users + sum), plus 2 crossover rows.
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2 * 5 + 2);
}

#[test]
fn export_preset_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = uplink(&["export-preset", "fig_power_scaling", "--out", "p.json"], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("p.json")).unwrap();
    let exp = uplink_cli::Experiment::from_json_str(&text).unwrap();
    assert_eq!(exp, uplink_cli::preset("fig_power_scaling").unwrap());
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(uplink(&["run", "--preset", "missing"], dir.path()).status.code(), Some(2));
    assert_eq!(uplink(&["run"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.json"), r#"{ "name": "x", "sweep": {"variable": "N", "values": [8]}, "methods": [], "base": {} }"#).unwrap();
    assert_eq!(uplink(&["run", "--config", "bad.json"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("tau.json"), SMALL.replace("\"seed\": 4", "\"seed\": 4, \"tau\": 3")).unwrap();
    assert_eq!(uplink(&["run", "--config", "tau.json"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("junk.json"), "{ not json").unwrap();
    assert_eq!(uplink(&["run", "--config", "junk.json"], dir.path()).status.code(), Some(2));
    assert_eq!(uplink(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn io_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(uplink(&["run", "--config", "absent.json"], dir.path()).status.code(), Some(3));
    std::fs::write(dir.path().join("e.json"), SMALL).unwrap();
    let out = uplink(&["run", "--config", "e.json", "--out", "no/such/dir/x.csv"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn dump_channel_writes_all_cells() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.json"), r#"{ "N": 16, "K": 3 }"#).unwrap();
    let out = uplink(&["dump-channel", "--config", "s.json", "--out", "g.bin", "--trial", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(dir.path().join("g.bin")).unwrap();
    let g = uplink_core::channel::read_channel_dump(bytes.as_slice()).unwrap();
    assert_eq!(g.len(), 7);
    assert_eq!(g[0].shape(), (16, 3));
}
