mod common;

use std::process::{Command, Output};

use common::data;
use serde_json::Value;

fn run(args: &[&str]) -> (i32, Value, Output) {
    let out = Command::new(env!("CARGO_BIN_EXE_geff")).args(args).output().expect("binary runs");
    let report: Value = serde_json::from_slice(&out.stdout).expect("stdout is a JSON report");
    (out.status.code().unwrap(), report, out)
}

fn tmp(name: &str) -> String {
    let mut p = std::env::temp_dir();
    p.push(format!("geff-cli-{}-{name}", std::process::id()));
    p.to_string_lossy().into_owned()
}

#[test]
fn geff_on_triangle() {
    let (code, r, _) = run(&["geff", "--network", &data("triangle.json"), "--set-a", "0", "--set-b", "1"]);
    assert_eq!(code, 0);
    assert_eq!(r["schema"], 1);
    assert!((r["geff"].as_f64().unwrap() - 1.5).abs() < 1e-12);
    assert!((r["reff"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn geff_on_power_network() {
    let (code, r, _) = run(&[
        "geff",
        "--network",
        &data("6bus.json"),
        "--equilibrium",
        &data("eq_B.json"),
        "--set-a",
        "4",
        "--set-b",
        "8",
    ]);
    assert_eq!(code, 0);
    assert!((r["geff"].as_f64().unwrap() - 2.85).abs() < 0.01);
}

#[test]
fn overlapping_sets_are_input_errors() {
    let (code, r, out) = run(&["geff", "--network", &data("triangle.json"), "--set-a", "0", "--set-b", "0,1"]);
    assert_eq!(code, 1);
    assert!(r["error"]["message"].as_str().unwrap().contains("overlap"));
    assert!(!out.stderr.is_empty());
}

#[test]
fn singular_block_exit_code() {
    let path = tmp("singular.json");
    std::fs::write(
        &path,
        r#"{"nodes":[{"id":0},{"id":1},{"id":2}],"edges":[{"from":0,"to":2,"w":1},{"from":2,"to":1,"w":-1},{"from":0,"to":1,"w":1}]}"#,
    )
    .unwrap();
    let (code, r, _) = run(&["geff", "--network", &path, "--set-a", "0", "--set-b", "1"]);
    assert_eq!(code, 2);
    assert_eq!(r["diagnostics"]["eliminated_block"], "singular");
}

#[test]
fn check_psd_methods() {
    for m in ["sequential", "bruteforce", "eigen"] {
        let (code, r, _) = run(&["check-psd", "--network", &data("triangle.json"), "--method", m]);
        assert_eq!(code, 0);
        assert_eq!(r["psd_one_zero"], true, "{m}");
        let (_, r, _) = run(&["check-psd", "--network", &data("four_cycle.json"), "--method", m]);
        assert_eq!(r["psd_one_zero"], false, "{m}");
    }
    let (_, r, _) = run(&["check-psd", "--network", &data("four_cycle.json")]);
    let v = &r["sequential"]["violation"];
    assert_eq!(v["node"], "2");
    assert_eq!(v["set_b"], serde_json::json!(["1"]));
}

#[test]
fn check_psd_fuzz_agrees() {
    let (code, r, _) = run(&["check-psd", "--fuzz", "60", "--seed", "3"]);
    assert_eq!(code, 0);
    assert_eq!(r["agree"], true);
}

#[test]
fn bruteforce_refuses_large_graphs() {
    let path = tmp("path11.json");
    let nodes: Vec<String> = (0..11).map(|k| format!("{{\"id\":{k}}}")).collect();
    let edges: Vec<String> = (0..10).map(|k| format!("{{\"from\":{k},\"to\":{},\"w\":1}}", k + 1)).collect();
    std::fs::write(&path, format!("{{\"nodes\":[{}],\"edges\":[{}]}}", nodes.join(","), edges.join(","))).unwrap();
    let (code, _, _) = run(&["check-psd", "--network", &path, "--method", "bruteforce"]);
    assert_eq!(code, 1);
}

#[test]
fn classify_bundled_equilibria() {
    for (s, class, crit) in [("A", "StableHyperbolic", 0), ("B", "StableHyperbolic", 1), ("C", "UnstableType", 2)] {
        let (code, r, _) = run(&["classify", "--network", &data("6bus.json"), "--equilibrium", &data(&format!("eq_{s}.json"))]);
        assert_eq!(code, 0);
        assert_eq!(r["class"], class, "{s}");
        assert_eq!(r["critical_lines"].as_array().unwrap().len(), crit, "{s}");
    }
    let (_, r, _) = run(&["classify", "--network", &data("6bus.json"), "--equilibrium", &data("eq_C.json")]);
    assert_eq!(r["type"], 1);
}

#[test]
fn classify_solve_from_seed() {
    let (code, r, _) = run(&["classify", "--network", &data("6bus.json"), "--solve-from", &data("eq_E.json"), "--set-a", "1", "--set-b", "2,3"]);
    assert_eq!(code, 0);
    assert_eq!(r["class"], "StableHyperbolic");
    assert!(r["max_shift_deg"].as_f64().unwrap() < 0.02);
    assert!((r["indicator"]["geff"].as_f64().unwrap() - 7.30).abs() < 0.01);
}

#[test]
fn simulate_writes_trajectory() {
    let csv = tmp("traj_A.csv");
    let (code, r, _) = run(&[
        "simulate", "--network", &data("6bus.json"), "--equilibrium", &data("eq_A.json"), "--fault-bus", "4", "--fault-r", "0.02", "--t-clear",
        "1.0", "--t-end", "10", "--out", &csv,
    ]);
    assert_eq!(code, 0);
    assert_eq!(r["verdict"], "Unstable");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,theta_1,theta_2,theta_3,theta_4,theta_5,theta_6,theta_7,theta_8,theta_9,omega_1,omega_2,omega_3,stable"
    );
    assert_eq!(text.lines().count(), 10002);
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "0");
    assert_eq!(first[1], "0");
    assert_eq!(first[2], "-27.8722");

    let (_, r, _) = run(&[
        "simulate", "--network", &data("6bus.json"), "--equilibrium", &data("eq_D.json"), "--fault-bus", "4", "--fault-r", "0.02", "--t-clear",
        "1.0", "--t-end", "10", "--out", &csv,
    ]);
    assert_eq!(r["verdict"], "Stable");
}

#[test]
fn cct_of_unstable_equilibrium_is_zero() {
    let (code, r, _) = run(&["cct", "--network", &data("6bus.json"), "--equilibrium", &data("eq_C.json"), "--fault-bus", "4", "--fault-r", "0.02"]);
    assert_eq!(code, 0);
    assert_eq!(r["cct"], 0.0);
    assert_eq!(r["unstable_equilibrium"], true);
}

#[test]
fn cct_reports_trace() {
    let (code, r, _) = run(&["cct", "--network", &data("6bus.json"), "--equilibrium", &data("eq_A.json"), "--fault-bus", "4", "--fault-r", "0.02"]);
    assert_eq!(code, 0);
    assert!((r["cct"].as_f64().unwrap() - 0.95).abs() < 0.2);
    assert!(r["trace"].as_array().unwrap().len() >= 7);
    assert_eq!(r["monotone"], true);
}

#[test]
fn opf_with_and_without_floor() {
    let eq_out = tmp("eq_opf.json");
    let common = ["--network", &data("6bus.json"), "--cost", &data("6bus_cost.json"), "--set-a", "1", "--set-b", "2,3"];
    let mut args = vec!["opf", "--gmin", "8", "--out", &eq_out];
    args.extend(common);
    let (code, r, _) = run(&args);
    assert_eq!(code, 0);
    assert!((r["objective"].as_f64().unwrap() - 204.04).abs() < 0.5);
    assert!(r["violations"].as_array().unwrap().is_empty());
    let (code, c, _) = run(&["classify", "--network", &data("6bus.json"), "--equilibrium", &eq_out]);
    assert_eq!(code, 0);
    assert_eq!(c["class"], "StableHyperbolic");
    assert!(c["max_mismatch"].as_f64().unwrap() < 1e-5);

    let mut args = vec!["opf", "--no-geff"];
    args.extend(common);
    let (code, r, _) = run(&args);
    assert_eq!(code, 0);
    assert!((r["objective"].as_f64().unwrap() - 198.88).abs() < 0.5);
}

#[test]
fn reports_are_reproducible() {
    let args = ["classify", "--network", &data("6bus.json"), "--equilibrium", &data("eq_B.json")];
    let (_, _, a) = run(&args);
    let (_, _, b) = run(&args);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn malformed_input_exit_code() {
    let path = tmp("bad.json");
    std::fs::write(&path, "{\"nodes\": [").unwrap();
    let (code, _, _) = run(&["check-psd", "--network", &path]);
    assert_eq!(code, 1);
}
