//! A schedule is enough to rebuild the exact trace.

use std::error::Error;

use edhoc_lab::environment::{explore_one, schedule_from_jsonl, schedule_to_jsonl, trace_to_jsonl, Bounds, World};
use edhoc_lab::properties::{check_all, Lemma};
use edhoc_lab::roles::MethodPair;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let bounds = Bounds::default();
    let run = explore_one(MethodPair::SIG_STAT, 42, bounds);
    let text = schedule_to_jsonl(&run.schedule);
    let again = World::replay(&schedule_from_jsonl(&text)?, bounds.depth).map_err(|(i, e)| format!("step {i}: {e}"))?;
    assert_eq!(trace_to_jsonl(&again.trace), trace_to_jsonl(&run.trace));
    let a = check_all(&run.trace, &Lemma::ALL, bounds)?;
    let b = check_all(&again.trace, &Lemma::ALL, bounds)?;
    assert_eq!(a, b);
    println!("{} actions, {} events, identical on replay", run.schedule.len(), run.trace.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
