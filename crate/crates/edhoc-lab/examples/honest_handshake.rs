//! i1 -> r2 -> i3 -> r4 for every method, driven by hand.

use std::error::Error;

use edhoc_lab::environment::Registry;
use edhoc_lab::roles::{i1, r2, InitiatorConfig, MethodPair, ResponderConfig};
use edhoc_lab::term::{equal_mod_e, Fresh};

pub fn handshake(pair: MethodPair) -> Result<(), Box<dyn Error>> {
    let mut reg = Registry::default();
    let mut fresh = Fresh::default();
    if pair.is_psk() {
        reg.register_psk("I", "R", &mut fresh)?;
    } else {
        reg.register("I", pair.initiator, &mut fresh)?;
        reg.register("R", pair.responder, &mut fresh)?;
    }
    let ic = InitiatorConfig {
        identity: "I".into(),
        intended_peer: "R".into(),
        pair,
        suites: vec![0],
        mitigation: true,
    };
    let rc = ResponderConfig { identity: "R".into(), supported_suites: [0].into(), accepted_pairs: vec![pair] };

    let tid_i = fresh.name("tid");
    let (mut ist, m1, _) = i1(&ic, tid_i, &reg, &mut fresh)?;
    let tid_r = fresh.name("tid");
    let (mut rst, m2, _) = r2(&rc, tid_r, &m1, &reg, &mut fresh)?;
    let (m3, _) = ist.i3(&m2, &reg)?;
    let events = rst.r4(&m3, &reg)?;

    let (ki, kr) = (ist.sk.clone().unwrap(), rst.sk.clone().unwrap());
    assert!(equal_mod_e(&ki.imp_sk, &kr.imp_sk));
    assert!(equal_mod_e(&ki.exp_sk, &kr.exp_sk));
    assert_eq!(ist.keys, rst.keys);
    assert_eq!(ist.exporter("OSCORE Master Secret"), rst.exporter("OSCORE Master Secret"));
    println!("{pair:10} {} events at R, impSk = {}", events.len(), ki.imp_sk);
    Ok(())
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for pair in MethodPair::ALL {
        handshake(pair)?;
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
