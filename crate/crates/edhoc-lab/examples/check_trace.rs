//! Traces as JSON lines, checked offline.

use std::error::Error;

use edhoc_lab::environment::{trace_from_jsonl, trace_to_jsonl, Bounds};
use edhoc_lab::properties::{check_all, Lemma};
use edhoc_lab::roles::MethodPair;
use edhoc_lab::scenarios::scenario_honest;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let run = scenario_honest(MethodPair::STAT_SIG, 0)?;
    let text = trace_to_jsonl(&run.trace);
    println!("{}", text.lines().take(3).collect::<Vec<_>>().join("\n"));
    let back = trace_from_jsonl(&text)?;
    assert_eq!(back, run.trace);
    for v in check_all(&back, &Lemma::ALL, Bounds::default())? {
        println!("{v}");
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
