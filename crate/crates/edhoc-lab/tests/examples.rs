// Every example in examples/ runs to completion.


#[test]
fn term_laws_runs() {
    term_laws::run_example().expect("term_laws example should run");
}

#[allow(dead_code)]
#[path = "../examples/honest_handshake.rs"]
mod honest_handshake;

#[test]
fn honest_handshake_runs() {
    honest_handshake::run_example().expect("honest_handshake example should run");
}

#[allow(dead_code)]
#[path = "../examples/key_hierarchy.rs"]
mod key_hierarchy;

#[test]
fn key_hierarchy_runs() {
    key_hierarchy::run_example().expect("key_hierarchy example should run");
}

#[allow(dead_code)]
#[path = "../examples/wire_roundtrip.rs"]
mod wire_roundtrip;

#[test]
fn wire_roundtrip_runs() {
    wire_roundtrip::run_example().expect("wire_roundtrip example should run");
}

#[allow(dead_code)]
#[path = "../examples/attacker_deduction.rs"]
mod attacker_deduction;

#[test]
fn attacker_deduction_runs() {
    attacker_deduction::run_example().expect("attacker_deduction example should run");
}

#[allow(dead_code)]
#[path = "../examples/unintended_peer.rs"]
mod unintended_peer;

#[test]
fn unintended_peer_runs() {
    unintended_peer::run_example().expect("unintended_peer example should run");
}

#[allow(dead_code)]
#[path = "../examples/pfs_and_independence.rs"]
mod pfs_and_independence;

#[test]
fn pfs_and_independence_runs() {
    pfs_and_independence::run_example().expect("pfs_and_independence example should run");
}

#[allow(dead_code)]
#[path = "../examples/negotiation.rs"]
mod negotiation;

#[test]
fn negotiation_runs() {
    negotiation::run_example().expect("negotiation example should run");
}

#[allow(dead_code)]
#[path = "../examples/explore.rs"]
mod explore;

#[test]
fn explore_runs() {
    explore::run_example().expect("explore example should run");
}

#[allow(dead_code)]
#[path = "../examples/check_trace.rs"]
mod check_trace;

#[test]
fn check_trace_runs() {
    check_trace::run_example().expect("check_trace example should run");
}

#[allow(dead_code)]
#[path = "../examples/replay.rs"]
mod replay;

#[test]
fn replay_runs() {
    replay::run_example().expect("replay example should run");
}
