//! Recorded encodings and traces. A change here means the wire format or
//! the honest run changed; regenerate the fixtures only on purpose.

use edhoc_lab::environment::{schedule_from_jsonl, schedule_to_jsonl, trace_from_jsonl, trace_to_jsonl, World};
use edhoc_lab::properties::{check_all, Lemma};
use edhoc_lab::roles::AuthMethod;
use edhoc_lab::term::Term;
use edhoc_lab::wire::{decode, encode, Message, Message1};

const M1_HEX: &str = include_str!("fixtures/m1_stat_sig.hex");
const TRACE: &str = include_str!("fixtures/sig_sig_trace.jsonl");
const SCHEDULE: &str = include_str!("fixtures/sig_sig_schedule.jsonl");

#[test]
fn m1_bytes_are_stable() {
    let m1 = Message1 {
        method_i: AuthMethod::Stat,
        method_r: AuthMethod::Sig,
        suites_i: vec![2, 1, 0],
        g_x: Term::exp(Term::g(), Term::fresh("x", 1)),
        c_i: Term::public("cI1"),
        id_psk: None,
        ad_1: None,
    };
    let bytes = hex::decode(M1_HEX.trim()).unwrap();
    assert_eq!(encode(&Message::M1(m1.clone())), bytes);
    assert_eq!(decode(&bytes).unwrap(), Message::M1(m1));
}

#[test]
fn honest_schedule_replays_to_recorded_trace() {
    let actions = schedule_from_jsonl(SCHEDULE).unwrap();
    assert_eq!(schedule_to_jsonl(&actions), SCHEDULE);
    let w = World::replay(&actions, 4).map_err(|(i, e)| format!("{i}: {e}")).unwrap();
    assert_eq!(trace_to_jsonl(&w.trace), TRACE);
}

#[test]
fn recorded_trace_passes_core() {
    let tr = trace_from_jsonl(TRACE).unwrap();
    assert_eq!(trace_to_jsonl(&tr), TRACE);
    for v in check_all(&tr, &Lemma::CORE, Default::default()).unwrap() {
        assert!(v.passed(), "{v}");
    }
}
