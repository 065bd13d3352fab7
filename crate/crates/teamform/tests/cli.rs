use std::path::PathBuf;
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("teamform-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn instance(name: &str, json: &str) -> PathBuf {
    let path = scratch(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teamform")).args(args).output().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

const K1: &str = r#"{"clusters":[{"size":4,"p":"0.5"}],"team_size":2,"utility":{"pair":["0","1","1"]}}"#;
const K1_CONCAVE: &str = r#"{"clusters":[{"size":4,"p":"0.5"}],"team_size":2,"utility":{"pair":["0","1","1.5"]}}"#;
const K1_AWARE: &str =
    r#"{"clusters":[{"size":4,"p":"0.5"}],"team_size":2,"utility":{"pair":["0","1","1.5"]},"awareness":"aware"}"#;
const K2: &str =
    r#"{"clusters":[{"size":4,"p":"0.8"},{"size":4,"p":"0.2"}],"team_size":2,"utility":{"pair":["0","1","1.5"]}}"#;

#[test]
fn evaluate_no_information_and_first_best() {
    let inst = instance("k1.json", K1);
    let out = run(&["evaluate", "--instance", inst.to_str().unwrap(), "--scheme", "noinfo"]);
    assert!(out.status.success());
    let v = json(&out);
    assert!(v["agent_utilities"].as_array().unwrap().iter().all(|u| u["exact"] == "3/4"));

    // p·u11 + (1−p)·u00 + (2u10 − u11 − u00)·E[min(ℓ,h)]/n with E[min] = 5/4.
    let out = run(&["evaluate", "--instance", inst.to_str().unwrap(), "--scheme", "fb"]);
    assert!(json(&out)["agent_utilities"].as_array().unwrap().iter().all(|u| u["exact"] == "13/16"));
}

#[test]
fn solve_then_verify_round_trip() {
    let inst = instance("k1c.json", K1_CONCAVE);
    let scheme = scratch("solved.json");
    let out = run(&[
        "solve",
        "--instance",
        inst.to_str().unwrap(),
        "--program",
        "relaxed",
        "--out",
        scheme.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(json(&out)["value"]["exact"], "3/8");
    let out = run(&["verify", "--instance", inst.to_str().unwrap(), "--scheme", scheme.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let checks = &json(&out)["checks"];
    for c in ["persuasive", "pareto", "stable"] {
        assert_eq!(checks[c]["pass"], true, "{c}");
    }
}

#[test]
fn self_aware_program_and_failing_check() {
    let inst = instance("aware.json", K1_AWARE);
    let out = run(&["solve", "--instance", inst.to_str().unwrap(), "--program", "aware"]);
    assert_eq!(json(&out)["value"]["exact"], "1/2");
    let out = run(&["verify", "--instance", inst.to_str().unwrap(), "--scheme", "fullinfo"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["checks"]["pareto"]["pass"], false);
    let out = run(&["audit-impossibility", "--instance", inst.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["blocker"], 1);
}

#[test]
fn certify_two_clusters() {
    let inst = instance("k2.json", K2);
    let out = run(&["certify", "--instance", inst.to_str().unwrap(), "--eps", "3/10"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["violations"].as_array().unwrap().is_empty());
    assert_eq!(v["canonical_rows_checked"], 17920);
}

#[test]
fn regret_writes_csv() {
    let inst = instance("k2r.json", K2);
    let csv = scratch("regret.csv");
    let out = run(&[
        "regret",
        "--instance",
        inst.to_str().unwrap(),
        "--eps",
        "3/10",
        "--seed",
        "3",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.lines().next().unwrap().starts_with("n1,n2,p1,p2,utility"));
    assert!(text.contains(",lp_opt,") && text.contains(",dual_lb,"));
}

#[test]
fn configuration_errors_exit_with_two() {
    assert_eq!(run(&["solve", "--instance", "/nonexistent/instance.json"]).status.code(), Some(2));
    let inst = instance("k2e.json", K2);
    assert_eq!(run(&["certify", "--instance", inst.to_str().unwrap(), "--eps", "1/2"]).status.code(), Some(2));
    assert_eq!(run(&["evaluate", "--instance", inst.to_str().unwrap(), "--scheme", "bogus"]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--instance", inst.to_str().unwrap(), "--lp-cap", "10"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let odd = instance("odd.json", r#"{"clusters":[{"size":3,"p":"0.5"}],"team_size":2,"utility":{"pair":[0,1,2]}}"#);
    assert_eq!(run(&["evaluate", "--instance", odd.to_str().unwrap(), "--scheme", "noinfo"]).status.code(), Some(2));
}
