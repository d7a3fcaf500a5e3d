//! B asks for C and ends up with A, unless it checks who answered.

use std::error::Error;

use edhoc_lab::roles::MethodPair;
use edhoc_lab::scenarios::{scenario_unintended_peer, ScenarioError};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for mitigation in [false, true] {
        let run = scenario_unintended_peer(mitigation, true, MethodPair::SIG_SIG, 0)?;
        print!("mitigation={mitigation}\n{run}");
        assert!(run.all_as_expected());
    }
    match scenario_unintended_peer(false, false, MethodPair::SIG_SIG, 0) {
        Err(ScenarioError::Env(step, e)) => println!("with A honest, step {step} is refused: {e}"),
        other => return Err(format!("expected a refused injection, got {other:?}").into()),
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
