use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use busplan_core::milp::parse_lp;
use busplan_core::scenario::{load_scenario_file, scenario_to_toml};
use tempfile::TempDir;

fn busplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_busplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = busplan(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn scenario(dir: &TempDir, buses: &str, seed: &str) -> PathBuf {
    let path = dir.path().join(format!("s{buses}_{seed}.toml"));
    ok(&["gen", "--buses", buses, "--seed", seed, "--out", p(&path)]);
    path
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.toml");
    let b = dir.path().join("b.toml");
    let out = ok(&["gen", "--buses", "4", "--seed", "7", "--out", p(&a)]);
    assert!(out.contains("4 buses"));
    ok(&["gen", "--buses", "4", "--seed", "7", "--out", p(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(load_scenario_file(&a).unwrap().buses.len(), 4);
    let stdout = ok(&["gen", "--buses", "4", "--seed", "7"]);
    assert_eq!(stdout.as_bytes(), fs::read(&a).unwrap());
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(busplan(&["gen", "--buses", "0"]).status.code(), Some(2));
    assert_eq!(
        busplan(&["simulate", "--scenario", "x.toml", "--strategy", "greedy"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        busplan(&["plan", "--scenario", "/nonexistent/s.toml"]).status.code(),
        Some(2)
    );
    assert_eq!(busplan(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn plan_writes_csv_summary_and_lp() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "2", "3");
    let out_dir = dir.path().join("plan");
    let stdout = ok(&["plan", "--scenario", p(&s), "--export-lp", "--out-dir", p(&out_dir)]);
    assert!(stdout.contains("objective"));
    let csv = fs::read_to_string(out_dir.join("plan.csv")).unwrap();
    assert!(csv.starts_with("bus,charger_type,start_min,end_min,kwh_gained\n"));
    let summary = json(&out_dir.join("plan.json"));
    let intervals = summary["intervals"].as_u64().unwrap() as usize;
    assert_eq!(csv.lines().count(), intervals + 1);
    let total: f64 = ["consumption", "baseline_demand", "tou_demand"]
        .iter()
        .map(|k| summary["cost"][k].as_f64().unwrap())
        .sum();
    assert!((total - summary["objective"].as_f64().unwrap()).abs() < 1e-6);
    let lp = fs::read_to_string(out_dir.join("model.lp")).unwrap();
    parse_lp(&lp).unwrap();
}

#[test]
fn fixed_rate_costs_at_least_as_much() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "1", "2");
    let var = dir.path().join("var");
    let fixed = dir.path().join("fixed");
    ok(&["plan", "--scenario", p(&s), "--out-dir", p(&var)]);
    ok(&["plan", "--scenario", p(&s), "--fixed-rate", "--out-dir", p(&fixed)]);
    let v = json(&var.join("plan.json"))["objective"].as_f64().unwrap();
    let f = json(&fixed.join("plan.json"))["objective"].as_f64().unwrap();
    assert!(f >= v - 1e-6, "fixed {f} < variable {v}");
}

#[test]
fn infeasible_plan_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "1", "2");
    let mut sc = load_scenario_file(&s).unwrap();
    // The first route drains the bus below its minimum before any charger.
    sc.buses[0].initial_soc = sc.buses[0].min_soc + 0.001;
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, scenario_to_toml(&sc)).unwrap();
    let out = busplan(&["plan", "--scenario", p(&bad), "--out-dir", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "2", "3");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        ok(&[
            "simulate",
            "--scenario",
            p(&s),
            "--strategy",
            "open-loop",
            "--seed",
            "4",
            "--out-dir",
            p(d),
        ]);
    }
    for f in ["trajectory.csv", "run.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_noise_hierarchical_tracks_nominal() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "2", "3");
    let run = dir.path().join("run");
    let plan = dir.path().join("plan");
    ok(&["plan", "--scenario", p(&s), "--out-dir", p(&plan)]);
    ok(&[
        "simulate",
        "--scenario",
        p(&s),
        "--strategy",
        "hierarchical",
        "--noise",
        "zero",
        "--out-dir",
        p(&run),
    ]);
    let nominal = json(&plan.join("plan.json"))["objective"].as_f64().unwrap();
    let cost = json(&run.join("run.json"))["cost"].as_f64().unwrap();
    assert!((cost - nominal).abs() <= 0.05 * nominal, "{cost} vs {nominal}");
}

#[test]
fn qin_never_charges_below_a_zero_threshold() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "2", "3");
    let out = dir.path().join("q");
    ok(&[
        "simulate",
        "--scenario",
        p(&s),
        "--strategy",
        "qin",
        "--threshold",
        "0",
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(json(&out.join("run.json"))["charge_events"], 0);
}

#[test]
fn single_run_mc_matches_simulate() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "2", "5");
    let mc = dir.path().join("mc");
    let sim = dir.path().join("sim");
    ok(&[
        "mc",
        "--scenario",
        p(&s),
        "--strategy",
        "qin",
        "--runs",
        "1",
        "--seed",
        "9",
        "--out-dir",
        p(&mc),
    ]);
    ok(&[
        "simulate",
        "--scenario",
        p(&s),
        "--strategy",
        "qin",
        "--seed",
        "9",
        "--out-dir",
        p(&sim),
    ]);
    let a = json(&mc.join("mc_qin.json"))["mean_cost"].as_f64().unwrap();
    let b = json(&sim.join("run.json"))["cost"].as_f64().unwrap();
    assert_eq!(a, b);
}

#[test]
fn mc_reports_are_merged_by_seed() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "2", "5");
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    let args = |d: &Path, jobs: &str| {
        ok(&[
            "mc",
            "--scenario",
            p(&s),
            "--strategy",
            "qin,open-loop",
            "--runs",
            "4",
            "--seed",
            "3",
            "--jobs",
            jobs,
            "--out-dir",
            p(d),
        ])
    };
    args(&one, "1");
    args(&two, "3");
    for k in ["qin", "open-loop"] {
        for f in [
            format!("mc_{k}_runs.csv"),
            format!("mc_{k}_trace.csv"),
            format!("mc_{k}.json"),
        ] {
            assert_eq!(fs::read(one.join(&f)).unwrap(), fs::read(two.join(&f)).unwrap(), "{f}");
        }
        let runs = fs::read_to_string(one.join(format!("mc_{k}_runs.csv"))).unwrap();
        assert_eq!(runs.lines().count(), 5);
        let trace = fs::read_to_string(one.join(format!("mc_{k}_trace.csv"))).unwrap();
        assert!(trace.starts_with("t,mean_soc,sigma3_lo,sigma3_hi\n"));
    }
    assert!(!one.join("mc_hierarchical.json").exists());
}

#[test]
fn chained_days_report_each_day() {
    let dir = TempDir::new().unwrap();
    let s = scenario(&dir, "1", "5");
    let out = dir.path().join("days");
    ok(&[
        "mc",
        "--scenario",
        p(&s),
        "--strategy",
        "open-loop",
        "--runs",
        "2",
        "--days",
        "2",
        "--out-dir",
        p(&out),
    ]);
    let doc = json(&out.join("mc_open-loop_days.json"));
    let days = doc["days"].as_array().unwrap();
    assert!(!days.is_empty() && days.len() <= 2);
    assert!(doc["drift_kwh"].as_f64().unwrap() >= 0.0);
    if days[0]["failure"].is_null() {
        assert!(out.join("mc_open-loop_day0_runs.csv").exists());
    }
}

#[test]
fn probe_bounds_are_conservative() {
    let csv = ok(&[
        "probe",
        "--p-cc",
        "150",
        "--alpha",
        "2.5",
        "--capacity",
        "300",
        "--points",
        "61",
    ]);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("soc_kwh,concave_bound_kwh,ideal_bound_kwh,exact_gain_kwh")
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 61);
    for r in &rows {
        assert!(r[1] <= r[2] + 1e-9, "{r:?}");
    }
    assert_eq!(
        busplan(&["probe", "--p-cc", "-1", "--alpha", "2", "--capacity", "10"])
            .status
            .code(),
        Some(2)
    );
}
