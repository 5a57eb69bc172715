use std::process::{Command, Output};

use serde_json::Value;

fn epsos(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epsos")).args(args).env_remove("EPSOS_MAX_STATES").output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("JSON output")
}

#[test]
fn builtin_languages_pass_the_format_check() {
    for lang in ["ccs", "abcde"] {
        let o = epsos(&["--language", lang, "check-format"]);
        assert_eq!(code(&o), 0, "{lang}: {}", stdout(&o));
    }
}

#[test]
fn mutated_language_file_fails_the_format_check() {
    let text = epsos::stdlib::CCS_SOURCE.replacen("x + y -alpha-> x' for", "x + y -alpha-> x' | x' for", 1);
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("mutant.sos");
    std::fs::write(&path, text).unwrap();
    let o = epsos(&["--language", path.to_str().unwrap(), "--format", "json", "check-format"]);
    assert_eq!(code(&o), 1);
    let clauses: Vec<String> = json(&o)["diagnostics"].as_array().unwrap().iter().map(|d| d["clause"].as_str().unwrap().to_string()).collect();
    assert!(clauses.iter().any(|c| c == "DS3"), "{clauses:?}");
}

#[test]
fn prefix_explores_to_two_states() {
    let v = json(&epsos(&["--format", "json", "lts", "a.0"]));
    assert_eq!(v["states"].as_array().unwrap().len(), 2);
    assert_eq!(v["transitions"].as_array().unwrap().len(), 1);
    assert_eq!(v["complete"], true);
    assert_eq!(v["transitions"][0]["label"], "a");
}

#[test]
fn dot_output_is_a_digraph() {
    let o = epsos(&["--format", "dot", "--fixture", "sec4_pq", "succ"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("digraph"));
}

#[test]
fn loop_versus_recursion_verdicts() {
    let strong = epsos(&["--fixture", "ex31", "bisim", "--strong", "P", "Q"]);
    assert_eq!(code(&strong), 0, "{}", stdout(&strong));
    let ep = epsos(&["--fixture", "ex31", "--format", "json", "bisim", "--ep", "P", "Q"]);
    assert_eq!(code(&ep), 1);
    let v = json(&ep);
    assert_eq!(v["result"], "false");
    assert_eq!(v["counterexample"][0]["clause"], "2.b");
}

#[test]
fn expansion_law_pair_is_separated() {
    let strong = epsos(&["bisim", "--strong", "a.0|b.0", "a.b.0+b.a.0"]);
    assert_eq!(code(&strong), 0);
    let ep = epsos(&["bisim", "--ep", "a.0|b.0", "a.b.0+b.a.0"]);
    assert_eq!(code(&ep), 1);
    assert!(stdout(&ep).contains("condition 2.a"), "{}", stdout(&ep));
}

#[test]
fn identical_terms_come_with_a_witness() {
    let v = json(&epsos(&["--format", "json", "bisim", "--ep", "a.0|b.0", "b.0|a.0"]));
    assert_eq!(v["result"], "true");
    assert!(!v["witness"].as_array().unwrap().is_empty());
}

#[test]
fn state_budget_gives_unknown() {
    let o = epsos(&["--max-states", "2", "bisim", "--strong", "a.b.c.0", "a.b.c.0"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("unknown"));
    let env = Command::new(env!("CARGO_BIN_EXE_epsos")).args(["--format", "json", "lts", "a.b.c.0"]).env("EPSOS_MAX_STATES", "2").output().unwrap();
    assert_eq!(code(&env), 2);
    assert_eq!(json(&env)["complete"], false);
}

#[test]
fn recursion_principle_and_premise() {
    assert_eq!(code(&epsos(&["rdp", "X", "{X = a.X + c.X}"])), 0);
    assert_eq!(code(&epsos(&["--language", "abcde", "rdp", "X", "{X = (c.X)^s}"])), 0);
    assert_eq!(code(&epsos(&["rdp", "X", "{X = y}"])), 3);
}

#[test]
fn congruence_probes_pass() {
    let o = epsos(&["--format", "json", "congruence-suite", "--trials", "5", "--abcde-trials", "2", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn every_fixture_meets_its_expectations() {
    let o = epsos(&["fixtures", "--run-all"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn sort_parameters_extend_the_alphabet() {
    assert_eq!(code(&epsos(&["lts", "d.0"])), 3);
    assert_eq!(code(&epsos(&["--param", "C=a,d", "lts", "d.0"])), 0);
}

#[test]
fn bad_input_exits_with_usage_code() {
    assert_eq!(code(&epsos(&["lts", "a.("])), 3);
    assert_eq!(code(&epsos(&["bogus"])), 3);
    assert_eq!(code(&epsos(&["lts"])), 3);
    assert_eq!(code(&epsos(&["lts", "x"])), 3);
    assert_eq!(code(&epsos(&["--fixture", "nope", "lts"])), 3);
    assert_eq!(code(&epsos(&["--help"])), 0);
}

#[test]
fn unicode_rendering_is_optional() {
    let plain = stdout(&epsos(&["lts", "~a.0"]));
    let fancy = stdout(&epsos(&["--unicode", "lts", "~a.0"]));
    assert_ne!(plain, fancy);
}
