//! Which PRKs coincide for which method.

use std::error::Error;

use edhoc_lab::environment::{session_action, setup_actions, Action, Role, World};
use edhoc_lab::key_schedule::KeySchedule;
use edhoc_lab::roles::MethodPair;

pub fn schedule(pair: MethodPair) -> Result<KeySchedule, Box<dyn Error>> {
    let mut w = World::default();
    for a in setup_actions(pair, &["A", "B"]) {
        w.apply(a)?;
    }
    w.apply(session_action(pair, "A", "B", false))?;
    for m in 0..3 {
        w.apply(Action::Deliver { msg: m })?;
    }
    match &w.sessions[0].role {
        Role::Initiator(st) => Ok(st.schedule.clone().ok_or("run did not complete")?),
        _ => Err("first session is the initiator".into()),
    }
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    println!("{:10} {:>18} {:>22}", "method", "PRK_2e=PRK_3e2m", "PRK_3e2m=PRK_4x3m");
    for pair in MethodPair::ALL {
        let ks = schedule(pair)?;
        let a = ks.prk_2e == ks.prk_3e2m;
        let b = ks.prk_4x3m.as_ref() == Some(&ks.prk_3e2m);
        assert_eq!(a, !pair.responder_stat());
        assert_eq!(b, !pair.initiator_stat());
        println!("{pair:10} {a:>18} {b:>22}");
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
