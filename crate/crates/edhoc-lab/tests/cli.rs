use std::path::PathBuf;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edhoc-lab")).args(args).output().expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("edhoc-lab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d.join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn handshake_passes() {
    for m in ["sig-sig", "sig-stat", "stat-sig", "stat-stat", "psk-psk"] {
        let o = lab(&["handshake", "--method", m]);
        assert_eq!(o.status.code(), Some(0), "{m}: {}", stdout(&o));
        assert_eq!(stdout(&o).matches("PASS").count(), 4);
    }
}

#[test]
fn unintended_peer_exit_codes() {
    assert_eq!(lab(&["scenario", "unintended-peer"]).status.code(), Some(1));
    assert_eq!(lab(&["scenario", "unintended-peer", "--mitigation"]).status.code(), Some(0));
    assert_eq!(lab(&["scenario", "unintended-peer", "--no-compromise"]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(lab(&["scenario", "nope"]).status.code(), Some(2));
    assert_eq!(lab(&["handshake", "--method", "sig-dh"]).status.code(), Some(2));
    assert_eq!(lab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(lab(&["check", "--trace", "/nonexistent/trace.jsonl"]).status.code(), Some(2));
}

#[test]
fn saved_trace_checks_the_same() {
    let (trace, sched, again) = (tmp("t.jsonl"), tmp("s.jsonl"), tmp("t2.jsonl"));
    let live = lab(&[
        "handshake", "--method", "stat-stat", "--json",
        "--trace", trace.to_str().unwrap(),
        "--schedule", sched.to_str().unwrap(),
    ]);
    let offline = lab(&["check", "--trace", trace.to_str().unwrap(), "--json"]);
    assert_eq!(stdout(&live), stdout(&offline));
    let replayed = lab(&[
        "replay", "--schedule", sched.to_str().unwrap(),
        "--trace", again.to_str().unwrap(), "--json",
    ]);
    assert_eq!(stdout(&live), stdout(&replayed));
    assert_eq!(std::fs::read(&trace).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn single_lemma_selection() {
    let trace = tmp("one.jsonl");
    lab(&["handshake", "--method", "stat-sig", "--trace", trace.to_str().unwrap()]);
    let o = lab(&["check", "--trace", trace.to_str().unwrap(), "--lemma", "authInjAgreeGuaranteeForI[impSk]"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("FAIL"));
}

#[test]
fn explore_small_batch() {
    let o = lab(&["explore", "--method", "all", "--seeds", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains("failures=0")).count(), 5);
}
