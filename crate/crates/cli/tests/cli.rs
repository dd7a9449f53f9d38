use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn dso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dso"))
        .args(args)
        .env("DSO_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn two_bus_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../cases/two_bus.json")
}

fn two_bus_json() -> Value {
    serde_json::from_str(&std::fs::read_to_string(two_bus_path()).unwrap()).unwrap()
}

fn write_case(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn run_bundled_two_bus() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = dso(&["run", two_bus_path().to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "market.csv",
        "prosumers.csv",
        "buses.csv",
        "branches.csv",
        "scenarios.csv",
        "trades.csv",
        "indices.json",
        "diagnostics.json",
        "run.json",
        "meta.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let diag = read_json(out.join("diagnostics.json"));
    assert_eq!(diag["relaxation_exact"], Value::Bool(true));
    assert!(diag["relaxation_gap"]["value"].as_f64().unwrap() <= 5e-4);
    for f in ["diagnostics.json", "indices.json", "run.json"] {
        let meta = &read_json(out.join(f))["meta"];
        assert_eq!(meta["seed"], 19, "{f}");
        assert!(meta["tolerance"].is_number(), "{f}");
        assert_eq!(meta["fixture_hash"].as_str().unwrap().len(), 64, "{f}");
    }
    let csv = std::fs::read_to_string(out.join("market.csv")).unwrap();
    for line in csv.lines().skip(1) {
        for cell in line.split(',') {
            cell.parse::<f64>().unwrap_or_else(|_| panic!("non-numeric cell {cell:?}"));
        }
    }
}

#[test]
fn no_export_with_excess_load_is_infeasible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut case = two_bus_json();
    case["network"]["e_ex_max"] = 0.0.into();
    for row in case["forecast"]["load"].as_array_mut().unwrap() {
        for v in row.as_array_mut().unwrap() {
            *v = (v.as_f64().unwrap() * 10.0).into();
        }
    }
    let path = write_case(tmp.path(), "islanded.json", &case);
    let out = tmp.path().join("out");
    let o = dso(&["run", &path, "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(read_json(out.join("run.json"))["status"], "Infeasible");
    assert!(!out.join("market.csv").exists());
}

#[test]
fn deterministic_reruns_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut case = two_bus_json();
    case["sigma_pv"] = 0.0.into();
    case["sigma_d"] = 0.0.into();
    case["options"]["n_s"] = 1.into();
    let path = write_case(tmp.path(), "det.json", &case);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        assert_eq!(code(&dso(&["run", &path, "-o", dir.to_str().unwrap()])), 0);
    }
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 10);
    for n in names {
        let x = std::fs::read(a.join(&n)).unwrap();
        let y = std::fs::read(b.join(&n)).unwrap();
        assert!(x == y, "{n:?} differs between reruns");
    }
}

#[test]
fn verify_empty_book_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let book = tmp.path().join("book.json");
    std::fs::write(&book, "[]").unwrap();
    let out = tmp.path().join("v");
    let o = dso(&[
        "verify",
        "bundled:two-bus",
        "--contracts",
        book.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = read_json(out.join("theorem.json"));
    assert_eq!(rep["verdict"], "InvarianceHolds");
    assert_eq!(rep["plan_kind"], "Zero");
    assert_eq!(rep["meta"]["seed"], 19);
}

#[test]
fn verify_power_contract_holds() {
    let tmp = tempfile::tempdir().unwrap();
    let book = tmp.path().join("book.json");
    let q = vec![0.4; 24];
    let contract = serde_json::json!([{
        "id": 0, "buyer": 1, "seller": 0, "q_buy": q, "q_sell": q
    }]);
    std::fs::write(&book, contract.to_string()).unwrap();
    let out = tmp.path().join("v");
    let o = dso(&[
        "verify",
        two_bus_path().to_str().unwrap(),
        "--contracts",
        book.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = read_json(out.join("theorem.json"));
    assert_eq!(rep["plan_kind"], "Power");
    assert!(rep["e_invariance_residual"].as_f64().unwrap() <= 1e-5);
}

#[test]
fn schema_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let mut case = two_bus_json();
    case["network"]["branches"][0]["r"] = "high".into();
    let path = write_case(tmp.path(), "bad.json", &case);
    let o = dso(&["run", &path, "-o", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/network/branches/0/r"), "{err}");
}

#[test]
fn sweep_writes_numeric_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = dso(&[
        "sweep",
        "bundled:two-bus",
        "--kind",
        "energy",
        "--ratios",
        "0:0.4:0.2",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0][2] > rows[1][2] && rows[1][2] > rows[2][2]);
    assert!(out.join("sweep.json").exists());
    assert!(out.join("sweep_hourly.csv").exists());
}

#[test]
fn sweep_without_designated_pair_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dso(&[
        "sweep",
        "bundled:feeder95",
        "--kind",
        "power",
        "--ratios",
        "0:1:0.5",
        "-o",
        tmp.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn generated_scenarios_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    for f in [&a, &b] {
        let o = dso(&["gen-scenarios", "bundled:two-bus", "-n", "5", "--seed", "7", "-o", f.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let meta = read_json(tmp.path().join("a.csv.meta.json"));
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["n_s"], 5);
}
