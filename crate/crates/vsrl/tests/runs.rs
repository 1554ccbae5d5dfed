use std::path::Path;
use std::process::Command;

use serde_json::json;
use vsrl::config::ExperimentConfig;
use vsrl::output::{parse_f64, read_csv};
use vsrl::runner::run_experiment;
use vsrl_core::stats::{mean, std_dev};

fn small_config() -> ExperimentConfig {
    let config: ExperimentConfig = serde_json::from_value(json!({
        "name": "small",
        "env": { "name": "three_state" },
        "algorithm": "q_learning",
        "strategy": { "kind": "rrr", "tail": [{ "family": "constant", "value": 0.1 }] },
        "learning_rate": { "family": "power_law", "kappa": 0.8, "scale": 1.0 },
        "horizon": 2000,
        "seeds": [3, 4, 5],
        "checkpoints": [500, 1000, 2000],
        "trace_every": 7,
    }))
    .unwrap();
    config.validate().unwrap();
    config
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn same_seed_gives_identical_files() {
    let config = small_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&config, 1, a.path()).unwrap();
    run_experiment(&config, 3, b.path()).unwrap();
    for seed in &config.seeds {
        for file in ["trace.jsonl", "metrics.csv", "q.json"] {
            let rel = format!("seed-{seed}/{file}");
            assert_eq!(read(&a.path().join(&rel)), read(&b.path().join(&rel)), "{rel}");
        }
    }
    assert_eq!(read(&a.path().join("aggregate.csv")), read(&b.path().join("aggregate.csv")));
}

#[test]
fn different_seeds_give_different_traces() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small_config(), 1, dir.path()).unwrap();
    let t3 = read(&dir.path().join("seed-3/trace.jsonl"));
    let t4 = read(&dir.path().join("seed-4/trace.jsonl"));
    assert!(!t3.is_empty());
    assert_ne!(t3, t4);
}

#[test]
fn aggregate_matches_per_seed_metrics() {
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config, 1, dir.path()).unwrap();
    let (agg_header, agg_rows) = read_csv(&dir.path().join("aggregate.csv")).unwrap();
    let per_seed: Vec<(Vec<String>, Vec<Vec<String>>)> = config
        .seeds
        .iter()
        .map(|s| read_csv(&dir.path().join(format!("seed-{s}/metrics.csv"))).unwrap())
        .collect();
    let header = &per_seed[0].0;
    assert_eq!(agg_rows.len(), config.checkpoints.len());
    for (i, row) in agg_rows.iter().enumerate() {
        assert_eq!(row[0], config.checkpoints[i].to_string());
        for (k, name) in header.iter().enumerate().skip(2) {
            let column: Vec<f64> = per_seed.iter().map(|(_, rows)| parse_f64(&rows[i][k]).unwrap()).collect();
            for (suffix, expected) in [("mean", mean(&column)), ("std", std_dev(&column))] {
                let j = agg_header
                    .iter()
                    .position(|h| *h == format!("{name}_{suffix}"))
                    .unwrap_or_else(|| panic!("no column {name}_{suffix}"));
                let got = parse_f64(&row[j]).unwrap();
                assert!(
                    (got.is_nan() && expected.is_nan()) || (got - expected).abs() <= 1e-12 * expected.abs().max(1.0),
                    "{name}_{suffix} at row {i}: {got} vs {expected}"
                );
            }
        }
    }
}

#[test]
fn csv_files_carry_the_config_hash() {
    let config = small_config();
    let dir = tempfile::tempdir().unwrap();
    let result = run_experiment(&config, 1, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# vsrl ") && first.ends_with(&result.hash), "{first}");
}

fn vsrl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vsrl")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let max = vsrl(&["check", "non-expansion", "--operator", "max", "--trials", "200", "--search-budget", "50"]);
    assert_eq!(max.status.code(), Some(0), "{}", String::from_utf8_lossy(&max.stderr));
    let boltzmann = vsrl(&[
        "check",
        "non-expansion",
        "--operator",
        "boltzmann",
        "--beta",
        "5",
        "--trials",
        "2000",
        "--search-budget",
        "500",
    ]);
    assert_eq!(boltzmann.status.code(), Some(1));
    let missing = vsrl(&["check", "non-expansion", "--operator", "mellowmax"]);
    assert_eq!(missing.status.code(), Some(2));
    let absent = vsrl(&["run", "/nonexistent/config.json"]);
    assert_eq!(absent.status.code(), Some(2));
}

#[test]
fn run_then_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("short.json");
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/cliff_rrr_q_learning.json");
    let mut config: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(shipped).unwrap()).unwrap();
    config["episodes"] = json!(30);
    config["seeds"] = json!([1]);
    std::fs::write(&config_path, config.to_string()).unwrap();
    let out = dir.path().join("out");
    let run = vsrl(&["--out", out.to_str().unwrap(), "--jobs", "1", "run", config_path.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("config.json").exists() && out.join("oracle.json").exists());
    let report = vsrl(&["--json", "report", out.to_str().unwrap()]);
    assert!(matches!(report.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&report.stderr));
    let value: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(value["report"]["items"].as_array().unwrap().len(), 5);
    assert!(out.join("report.json").exists() && out.join("report.csv").exists());
}
