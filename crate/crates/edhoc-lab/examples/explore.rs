//! Random adversarial schedules, every trace run through the checkers.

use std::error::Error;

use edhoc_lab::environment::{explore, seed_from_env, Bounds};
use edhoc_lab::properties::{check_all, Lemma};
use edhoc_lab::roles::MethodPair;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let first = seed_from_env(0);
    let bounds = Bounds::default();
    for pair in MethodPair::ALL {
        let runs = explore(pair, first, 20, bounds);
        let mut injected = 0;
        for r in &runs {
            injected += r.trace.iter().filter(|e| e.event.kind() == "Injected").count();
            for v in check_all(&r.trace, &Lemma::CORE, bounds)? {
                assert!(v.passed(), "seed {} {v}", r.seed);
            }
        }
        println!("{pair:10} {} schedules, {injected} injections, no counterexample", runs.len());
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
