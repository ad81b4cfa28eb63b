use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cfiblur"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn bundled_k1_k4_passes_and_is_reproducible() {
    let first = run(&["scenario", "run", "k1-K4"]);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    let second = run(&["scenario", "run", "k1-K4"]);
    assert_eq!(first.stdout, second.stdout);
    let report = json(&first);
    assert_eq!(report["status"], "pass");
    assert_eq!(report["checks"].as_array().unwrap().len(), 5);
}

#[test]
fn injected_identity_fails_with_witness() {
    let out = run(&["scenario", "run", "k1-K4-identity"]);
    assert_eq!(code(&out), 1);
    let report = json(&out);
    let blur = &report["checks"][0];
    assert_eq!(blur["passed"], false);
    assert!(blur["witness"]["u"].is_array());
}

#[test]
fn malformed_graph_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "3 2\n0 1\n1 5\n").unwrap();
    assert_eq!(code(&run(&["graph", "info", bad.to_str().unwrap()])), 4);

    let scenario = run(&["scenario", "show", "k1-K4"]);
    let mut doc: serde_json::Value = serde_json::from_slice(&scenario.stdout).unwrap();
    doc["graph"] = serde_json::json!({ "path": "bad.txt" });
    let path = dir.path().join("bad-graph.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = run(&["scenario", "run", path.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert!(json(&out)["error"].as_str().unwrap().contains("out of range"));
}

#[test]
fn audit_and_resource_failures_have_their_own_codes() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = run(&["scenario", "show", "k1-K4"]);
    let base: serde_json::Value = serde_json::from_slice(&scenario.stdout).unwrap();

    // A pebble inside the gadget of the twisted edge violates the distance hypothesis.
    let mut doc = base.clone();
    doc["pebbles"] = serde_json::json!([0]);
    doc["verify"] = serde_json::json!(["blur"]);
    let path = dir.path().join("audit.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    let out = run(&["scenario", "run", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let report = json(&out);
    let failing: Vec<_> = report["audit"]["checks"].as_array().unwrap().iter().filter(|c| c["holds"] == false).collect();
    assert!(!failing.is_empty());

    let mut doc = base;
    doc["limits"]["max_tuples"] = serde_json::json!(1000);
    let path = dir.path().join("resource.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    assert_eq!(code(&run(&["scenario", "run", path.to_str().unwrap()])), 3);
}

#[test]
fn unknown_scenario_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = run(&["scenario", "show", "k1-K4"]);
    let mut doc: serde_json::Value = serde_json::from_slice(&scenario.stdout).unwrap();
    doc["hidden_default"] = serde_json::json!(true);
    let path = dir.path().join("extra.json");
    std::fs::write(&path, doc.to_string()).unwrap();
    assert_eq!(code(&run(&["scenario", "run", path.to_str().unwrap()])), 4);
}

#[test]
fn every_fixture_roundtrips() {
    let scenarios = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    for dir in [fixtures(), scenarios] {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            let out = run(&["roundtrip", path.to_str().unwrap()]);
            assert_eq!(code(&out), 0, "{}", path.display());
            assert_eq!(json(&out)["stable"], true);
        }
    }
}

#[test]
fn truncated_document_is_a_decode_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixtures().join("K4-q2.cfi.json")).unwrap();
    let path = dir.path().join("truncated.json");
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    assert_eq!(code(&run(&["roundtrip", path.to_str().unwrap()])), 4);
}

#[test]
fn petersen_q3_structure_roundtrips_and_solves() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["cfi", "--graph", "petersen", "--q", "3", "--seed", "6"]);
    assert_eq!(code(&out), 0);
    let full = dir.path().join("petersen-q3.json");
    std::fs::write(&full, &out.stdout).unwrap();
    let rt = run(&["roundtrip", full.to_str().unwrap()]);
    assert_eq!(code(&rt), 0);
    assert_eq!(json(&rt)["canonical"], true);

    let doc = json(&out);
    let total = doc["twist"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum::<u64>() % 8;
    let stripped = dir.path().join("stripped.json");
    std::fs::write(&stripped, run(&["cfi", "--graph", "petersen", "--q", "3", "--seed", "6", "--stripped"]).stdout).unwrap();
    let solved = run(&["solve-query", stripped.to_str().unwrap()]);
    assert_eq!(json(&solved)["total"], total);
}

#[test]
fn blurer_verify_exit_codes() {
    let good = fixtures().join("arity1-q2.blurer.json");
    assert_eq!(code(&run(&["blurer", "verify", good.to_str().unwrap()])), 0);
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&good).unwrap()).unwrap();
    doc["tuples"].as_array_mut().unwrap().pop();
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    assert_eq!(code(&run(&["blurer", "verify", bad.to_str().unwrap()])), 1);

    let made = run(&["blurer", "make", "--k", "2", "--q", "4", "--a", "8", "--d", "7"]);
    assert_eq!(code(&made), 0);
    assert_eq!(json(&made)["k"], 2);
}

#[test]
fn game_play_prints_a_transcript() {
    let args = ["game", "play", "--graph", "K4", "--q", "2", "--k", "1", "--m", "2", "--rounds", "6", "--policy", "random", "--seed", "11"];
    let out = run(&args);
    assert_eq!(code(&out), 0);
    let t = json(&out);
    assert_eq!(t["outcome"]["kind"], "duplicator-survived");
    assert_eq!(t["rounds"].as_array().unwrap().len(), 6);
    assert_eq!(out.stdout, run(&args).stdout);
}

#[test]
fn randomness_needs_a_seed() {
    assert_eq!(code(&run(&["cfi", "--graph", "K4", "--q", "2"])), 4);
    assert_eq!(code(&run(&["game", "play", "--graph", "K4", "--q", "2", "--k", "1", "--m", "2", "--rounds", "1", "--policy", "random"])), 4);
}

#[test]
fn blur_subcommand_matches_scenario_contract() {
    let out = run(&["blur", "--graph", "K4", "--q", "2", "--k", "1", "--theta", "2", "--edge", "0,1", "--zero"]);
    assert_eq!(code(&out), 0);
    let out = run(&["blur", "--graph", "K4", "--q", "2", "--k", "1", "--theta", "2", "--edge", "0,1", "--zero", "--inject-identity"]);
    assert_eq!(code(&out), 1);
}
