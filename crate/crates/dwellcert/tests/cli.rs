//! End-to-end checks of the binary: every bundled scenario parses and runs,
//! and the exit-code contract (0 success/feasible, 2 infeasible/outside, 1
//! error) is stable.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dwellcert"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dwellcert-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn certify_damped_scenario_is_feasible() {
    let out = tmp_dir("certify-damped");
    let status = bin()
        .args(["certify", "--config"])
        .arg(scenario("example_a_damped.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{status:?}");
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.contains("feasible"), "{stdout}");
    // nu >= 0.1 for the damped wave splitting.
    let cert: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("certificate.json")).unwrap())
            .unwrap();
    assert!(cert["nu"].as_f64().unwrap() >= 0.1);
    let audit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("audit.json")).unwrap()).unwrap();
    assert_eq!(audit["pass"], serde_json::Value::Bool(true));
}

#[test]
fn certify_undamped_scenario_is_infeasible() {
    let out = tmp_dir("certify-undamped");
    let status = bin()
        .args(["certify", "--config"])
        .arg(scenario("example_a_undamped.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2), "{status:?}");
}

#[test]
fn malformed_config_exits_one() {
    let dir = tmp_dir("malformed");
    let bad = dir.join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let status = bin()
        .args(["certify", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1), "{status:?}");
}

#[test]
fn dwell_bound_warm_start_prints_the_bound() {
    let out = tmp_dir("dwell-ws");
    let status = bin()
        .args(["dwell-bound", "--config"])
        .arg(scenario("example_a_dwell_warmstart.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{status:?}");
    let stdout = String::from_utf8_lossy(&status.stdout);
    let tau: f64 = stdout
        .lines()
        .find(|l| l.starts_with("tau_D = "))
        .and_then(|l| l.trim_start_matches("tau_D = ").parse().ok())
        .expect("tau_D line");
    assert!((tau - 2.3105).abs() <= 1e-3, "tau_D = {tau}");
}

#[test]
fn dwell_bound_scalar_scenarios_match_analytic_optima() {
    for (name, expect) in [
        ("example_b_f-1_g2.json", 4.5178),
        ("example_b_f0.1_g0.5.json", 2.3372),
    ] {
        let out = tmp_dir(name);
        let status = bin()
            .args(["dwell-bound", "--config"])
            .arg(scenario(name))
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(status.status.code(), Some(0), "{status:?}");
        let stdout = String::from_utf8_lossy(&status.stdout);
        let tau: f64 = stdout
            .lines()
            .find(|l| l.starts_with("tau_D = "))
            .and_then(|l| l.trim_start_matches("tau_D = ").parse().ok())
            .expect("tau_D line");
        assert!((tau - expect).abs() <= 5e-3, "{name}: tau_D = {tau}");
    }
}

#[test]
fn simulate_writes_trace_and_plot() {
    let out = tmp_dir("simulate");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(scenario("example_a_damped.json"))
        .arg("--out")
        .arg(&out)
        .arg("--plot")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{status:?}");
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.contains("decay"), "damped run must decay: {stdout}");
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,l2,V,mode\n"));
    assert!(trace.lines().count() > 100);
    assert!(out.join("trace.svg").exists());
}

#[test]
fn simulate_with_stride_writes_state_snapshots() {
    let dir = tmp_dir("snapshots");
    let cfg = dir.join("strided.json");
    let text = std::fs::read_to_string(scenario("example_a_damped.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["grid"]["snapshot_stride"] = serde_json::json!(200);
    v["grid"]["n_x"] = serde_json::json!(101);
    std::fs::write(&cfg, serde_json::to_string(&v).unwrap()).unwrap();
    let out = dir.join("out");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{status:?}");
    let states = std::fs::read_dir(out.join("states")).unwrap().count();
    assert!(
        states > 5,
        "expected a handful of snapshots, found {states}"
    );
    let first = std::fs::read_to_string(out.join("states/state_00000.csv")).unwrap();
    assert!(first.lines().nth(1).unwrap().starts_with("x,w1,w2"));
    assert_eq!(first.lines().count(), 103); // comment + header + 101 points
}

#[test]
fn sweep_scalar_scenario_brackets_the_boundary() {
    let out = tmp_dir("sweep");
    let status = bin()
        .args(["sweep", "--config"])
        .arg(scenario("example_b_f-1_g2.json"))
        .arg("--out")
        .arg(&out)
        .args(["--jobs", "4"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{status:?}");
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for line in csv.lines().skip(1) {
        let mut parts = line.split(',');
        let p: f64 = parts.next().unwrap().parse().unwrap();
        let r: f64 = parts.next().unwrap().parse().unwrap();
        rows.push((p, r));
    }
    // Growth at period 1.2, decay at 4.6.
    let at = |p: f64| rows.iter().find(|(q, _)| (q - p).abs() < 1e-9).unwrap().1;
    assert!(at(1.2) < 0.0, "{rows:?}");
    assert!(at(4.6) > 0.0, "{rows:?}");
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.contains("changes sign"), "{stdout}");
}

#[test]
fn sweep_with_zero_steps_exits_one() {
    let dir = tmp_dir("sweep-bad");
    let cfg = dir.join("bad_sweep.json");
    let text = std::fs::read_to_string(scenario("example_b_f-1_g2.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["sweep"]["steps"] = serde_json::json!(0);
    std::fs::write(&cfg, serde_json::to_string(&v).unwrap()).unwrap();
    let status = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1), "{status:?}");
}

#[test]
fn validate_signal_exit_codes() {
    let dir = tmp_dir("validate");
    let fast = dwellcert::signals::periodic_signal(1.0, &[0, 1], 10.0);
    let slow = dwellcert::signals::periodic_signal(2.4, &[0, 1], 24.0);
    let fast_path = dir.join("fast.json");
    let slow_path = dir.join("slow.json");
    std::fs::write(&fast_path, fast.to_json()).unwrap();
    std::fs::write(&slow_path, slow.to_json()).unwrap();

    let status = bin()
        .arg("validate-signal")
        .arg(&fast_path)
        .args(["--tau-d", "2.3105", "--n0", "1"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2), "{status:?}");

    let status = bin()
        .arg("validate-signal")
        .arg(&slow_path)
        .args(["--tau-d", "2.3105", "--n0", "1"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{status:?}");

    let status = bin()
        .arg("validate-signal")
        .arg(dir.join("missing.json"))
        .args(["--tau-d", "1.0"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1), "{status:?}");
}

#[test]
fn every_bundled_scenario_parses() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let (cfg, base) = dwellcert::cli::ScenarioConfig::load(&path).unwrap();
        let system = cfg.system(&base).unwrap();
        assert!(system.num_modes() >= 1);
        n += 1;
    }
    assert!(n >= 5, "expected the bundled scenarios, found {n}");
}
