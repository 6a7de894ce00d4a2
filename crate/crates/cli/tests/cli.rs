use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(format!("{name}.json"))
}

fn byzlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_byzlab"))
        .args(args)
        .env_remove("BYZLAB_CAP")
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).expect("utf-8 output")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn seeded_simulation_is_byte_identical() {
    let s = scenario("notify_threshold");
    let a = byzlab(&["simulate", p(&s), "--seed", "7"]);
    let b = byzlab(&["simulate", p(&s), "--seed", "7", "--sequential"]);
    assert!(a.status.success(), "{}", text(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.contains(&b'\r'));
    assert!(text(&a.stdout).starts_with(r#"{"type":"header""#));
}

#[test]
fn enumerate_detect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let s = scenario("direct_observation");
    let out = byzlab(&["simulate", p(&s), "--enumerate", "--out", p(&trace)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let body = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(body.lines().filter(|l| l.contains(r#""type":"run""#)).count(), 7);

    let out = byzlab(&["detect", p(&s), "--trace", p(&trace)]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let records: Vec<serde_json::Value> = text(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 7 * 3 * 3);
    let convicted = records
        .iter()
        .filter(|r| r["agent"] == 1 && r["F"] == serde_json::json!([2]))
        .count();
    assert!(convicted > 0);
    for r in records.iter().filter(|r| r["F"] != serde_json::json!([])) {
        assert_eq!(r["revalidated"], true);
    }
}

#[test]
fn detect_answers_command_line_queries() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let s = scenario("occurrence_k1");
    assert!(byzlab(&["simulate", p(&s), "--enumerate", "--out", p(&trace)]).status.success());
    let out = byzlab(&["detect", p(&s), "--trace", p(&trace), "--query", "ext(o),1"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains(r#""verdict":true"#));
    let out = byzlab(&["detect", p(&s), "--trace", p(&trace), "--query", "ext(o),3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn detect_rejects_a_foreign_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    assert!(byzlab(&["simulate", p(&scenario("fault_free")), "--enumerate", "--out", p(&trace)])
        .status
        .success());
    let out = byzlab(&["detect", p(&scenario("two_faults")), "--trace", p(&trace)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("trace does not match"));
}

#[test]
fn check_evaluates_formulas() {
    let s = scenario("direct_observation");
    let out = byzlab(&["check", p(&s), "--formula", "faulty(2)", "--at", "0:0"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert_eq!(
        text(&out.stdout),
        "{\"run\":0,\"time\":0,\"formula\":\"faulty(2)\",\"value\":false}\n"
    );
    let out = byzlab(&["check", p(&s), "--formula", "faulty(1) | faulty(2) | faulty(3)"]);
    let verdicts = text(&out.stdout);
    assert!(verdicts
        .lines()
        .filter(|l| l.contains(r#""time":0"#))
        .all(|l| l.ends_with(r#""value":false}"#)));
    let out = byzlab(&["check", p(&s), "--formula", "B[1](faulty(2))"]);
    assert!(text(&out.stdout).contains(r#""value":true"#));
}

#[test]
fn check_against_detection_finds_nothing_unsound() {
    for name in ["notify_threshold", "group_relay", "relay_loop", "two_faults"] {
        let out = byzlab(&["check", p(&scenario(name)), "--formula", "true", "--against-detection"]);
        assert!(out.status.success(), "{name}: {}", text(&out.stderr));
        assert!(text(&out.stderr).contains(", 0 unsound"));
    }
}

#[test]
fn validate_reports_and_rejects() {
    let out = byzlab(&["validate", p(&scenario("sleep_closed"))]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("trust table verified"));
    assert!(!text(&out.stderr).contains("not closed"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"name": "bad", "agents": 2, "f": 0, "horizon": 1,
            "env_protocol": [{"sets": [["go(1)", "hib(1)"]]}]}"#,
    )
    .unwrap();
    let out = byzlab(&["validate", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("env_protocol[0].sets[0]"));

    std::fs::write(&bad, r#"{"name": "bad", "agents": 2, "f": 3, "horizon": 1, "env_protocol": []}"#).unwrap();
    assert_eq!(byzlab(&["validate", p(&bad)]).status.code(), Some(2));
}

#[test]
fn untrustworthy_tables_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("liar.json");
    std::fs::write(
        &bad,
        r#"{"name": "liar", "agents": 2, "f": 1, "horizon": 1,
            "agent_protocols": {"1": {"default": [["send(2,m)"]]}},
            "env_protocol": [{"sets": [["go(1)", "@recv_now(1,2)"]]}],
            "trust_table": [{"from": 1, "to": 2, "msg": "m", "formula": "faulty(2)"}],
            "oracle": true}"#,
    )
    .unwrap();
    let out = byzlab(&["validate", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("without believing"));
}

#[test]
fn cap_override_exits_with_cap_code() {
    let out = Command::new(env!("CARGO_BIN_EXE_byzlab"))
        .args(["simulate", p(&scenario("fault_free")), "--enumerate"])
        .env("BYZLAB_CAP", "5")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(text(&out.stderr).contains("cap exceeded"));
}

#[test]
fn missing_file_is_a_generic_failure() {
    assert_eq!(byzlab(&["validate", "/nonexistent/scenario.json"]).status.code(), Some(1));
}
