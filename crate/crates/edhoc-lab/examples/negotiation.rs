//! Suite negotiation over several runs, with a cache that may outlive
//! the meta-session.

use std::error::Error;

use edhoc_lab::environment::Registry;
use edhoc_lab::roles::{negotiate_meta, AuthMethod, SuiteCache};
use edhoc_lab::scenarios::negotiation_parties;
use edhoc_lab::term::Fresh;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let mut reg = Registry::default();
    let mut fresh = Fresh::default();
    reg.register("A", AuthMethod::Sig, &mut fresh)?;
    reg.register("B", AuthMethod::Sig, &mut fresh)?;
    let (ic, rc) = negotiation_parties();

    let mut cache = SuiteCache::new(true);
    for meta in 0..2 {
        let out = negotiate_meta(&ic, &rc, &reg, &mut fresh, &mut cache).map_err(|f| format!("{f:?}"))?;
        for r in &out.runs {
            println!("meta {meta}: offered {:?} -> {}", r.suites, r.outcome);
        }
        assert_eq!(out.runs.len(), 2 - meta);
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
