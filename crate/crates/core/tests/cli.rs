//! The `mclt` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn mclt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mclt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const RADEMACHER: &str = r#"{
    "kernel": {"variant": "rademacher"},
    "n_grid": [16, 32, 64, 128],
    "m": 2000,
    "p_values": [1, 2],
    "seed": 11
}"#;

const BANDED: &str = r#"{
    "kernel": {"variant": "banded", "alpha": 0.75, "beta": 0.25},
    "n_grid": [256, 512, 1024],
    "m": 1000,
    "p_values": [1, 2],
    "seed": 5
}"#;

#[test]
fn rademacher_v2_columns_are_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), RADEMACHER);
    let out = dir.path().join("out");
    let res = mclt(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));

    let mut reader = csv::Reader::from_path(out.join("rates.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    let v2_columns: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("v2_"))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(v2_columns.len(), 5);
    let mut rows = 0;
    for record in reader.records() {
        let record = record.unwrap();
        for &i in &v2_columns {
            assert_eq!(record[i].parse::<f64>().unwrap(), 0.0, "{}", &header[i]);
        }
        rows += 1;
    }
    assert_eq!(rows, 4);
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BANDED);
    let out = dir.path().join("out");
    let run = |threads: &str| {
        let res = mclt(&[
            "simulate", "--config", &config, "--out", out.to_str().unwrap(), "--threads", threads,
        ]);
        assert!(res.status.success());
        (
            std::fs::read(out.join("rates.csv")).unwrap(),
            std::fs::read(out.join("summary.json")).unwrap(),
        )
    };
    let first = run("1");
    assert!(first == run("1"), "rerun differs");
    assert!(first == run("3"), "thread count changed the output");
}

#[test]
fn summary_has_slope_fields_and_checks_pass() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BANDED);
    let out = dir.path().join("out");
    let res = mclt(&["simulate", "--config", &config, "--out", out.to_str().unwrap(), "--format", "json"]);
    assert!(res.status.success());
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["slopes"]["d_hat_slope"].is_f64());
    assert!(summary["slopes"]["v2_p1_slope"].is_f64());
    assert!(summary["fits"]["v2_p2"]["slope"].is_f64());

    // The JSON table holds the same numbers as the CSV one.
    let rows: Vec<serde_json::Value> =
        serde_json::from_slice(&std::fs::read(out.join("rates.json")).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    let csv_out = dir.path().join("csv");
    assert!(mclt(&["simulate", "--config", &config, "--out", csv_out.to_str().unwrap()]).status.success());
    let mut reader = csv::Reader::from_path(csv_out.join("rates.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    for (record, row) in reader.records().zip(&rows) {
        let record = record.unwrap();
        for (name, field) in header.iter().zip(record.iter()).skip(1) {
            assert_eq!(field.parse::<f64>().unwrap(), row[name].as_f64().unwrap(), "{name}");
        }
    }
}

#[test]
fn check_flag_sets_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let check = |name: &str, grid: &str, m: usize| {
        let config = dir.path().join(format!("{name}.json"));
        std::fs::write(
            &config,
            format!(
                r#"{{"kernel": {{"variant": "banded", "alpha": 0.75}}, "n_grid": {grid},
                    "m": {m}, "p_values": [1, 2], "seed": 5}}"#
            ),
        )
        .unwrap();
        let out = dir.path().join(name);
        mclt(&[
            "simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--check",
        ])
    };
    // Too short for the asymptotic slopes: the V² series is nearly flat.
    let res = check("short", "[4, 8, 16]", 1000);
    assert_eq!(res.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&res.stdout).contains("FAIL v2_p1_slope"));

    let res = check("long", "[256, 512, 1024, 2048]", 20_000);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stdout));
    assert!(!String::from_utf8_lossy(&res.stdout).contains("FAIL"));
}

#[test]
fn oracle_writes_three_step_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = mclt(&["oracle", "--kernel", "rademacher", "--n", "3", "--out", out]);
    assert!(res.status.success());
    let mut reader = csv::Reader::from_path(dir.path().join("oracle_n3.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["step", "atom_a", "atom_b", "atom_c", "probability"]
    );
    let last: Vec<(i64, f64)> = reader
        .records()
        .map(|r| r.unwrap())
        .filter(|r| &r[0] == "3")
        .map(|r| (r[1].parse().unwrap(), r[4].parse().unwrap()))
        .collect();
    assert_eq!(last, vec![(-3, 0.125), (-1, 0.375), (1, 0.375), (3, 0.125)]);

    let stats: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("oracle_n3.json")).unwrap()).unwrap();
    assert_eq!(stats["s2"], 3.0);
    assert_eq!(stats["v2_moments"][0]["value"], 0.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(mclt(&["oracle", "--n", "60", "--out", out]).status.code(), Some(3));
    assert_eq!(
        mclt(&["augment-check", "--kernel", "banded", "--gamma", "1"]).status.code(),
        Some(2)
    );
    let bad = write_config(dir.path(), r#"{"kernel": {"variant": "rademacher"}, "n_grid": [8, 4], "m": 100, "p_values": [1], "seed": 1}"#);
    let res = mclt(&["simulate", "--config", &bad, "--out", out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("n_grid"));
    assert_eq!(mclt(&["simulate", "--config", "/nonexistent.json"]).status.code(), Some(2));
}

#[test]
fn augment_check_rademacher_passes() {
    let res = mclt(&["augment-check", "--kernel", "rademacher", "--gamma", "1", "--n", "64", "--m", "500", "--check"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let v: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(v["paths"], 500);
    assert_eq!(v["v2_one"], 500);
    assert_eq!(v["bounded"], 500);
}

#[test]
fn rates_refits_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BANDED);
    let out = dir.path().join("out");
    assert!(mclt(&["simulate", "--config", &config, "--out", out.to_str().unwrap()]).status.success());
    let res = mclt(&["rates", "--input", out.join("rates.csv").to_str().unwrap()]);
    assert!(res.status.success());
    let fits: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(fits["v2_p1"]["slope"], summary["fits"]["v2_p1"]["slope"]);
    assert!(fits["hall_bound"]["slope"].is_f64());
}

#[test]
fn dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BANDED);
    let dump = dir.path().join("paths.bin");
    let res = mclt(&[
        "simulate", "--config", &config, "--out", dir.path().join("out").to_str().unwrap(),
        "--dump-paths", dump.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let batch = mclt::PathBatch::read_dump(std::fs::File::open(&dump).unwrap()).unwrap();
    assert_eq!((batch.n(), batch.m()), (256, 1000));
}
