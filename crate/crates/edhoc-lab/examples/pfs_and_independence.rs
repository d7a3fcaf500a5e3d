//! Late long-term key leaks and sibling session key leaks.

use std::error::Error;

use edhoc_lab::roles::MethodPair;
use edhoc_lab::scenarios::{scenario_pfs, scenario_reveal_before, scenario_sk_independence};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for pair in MethodPair::ALL {
        for run in [scenario_pfs(pair, 0)?, scenario_sk_independence(pair, 0)?, scenario_reveal_before(pair, 0)?] {
            assert!(run.all_as_expected(), "{run}");
            let secrecy = run.row("secrecyPFSGIYSessionKey").unwrap();
            println!("{pair:10} {:16} secrecy {:?} witness {:?}", run.name, secrecy.result, secrecy.witness);
        }
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
