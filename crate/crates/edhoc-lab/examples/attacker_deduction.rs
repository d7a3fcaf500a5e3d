//! What the network attacker can and cannot compute.

use std::error::Error;

use edhoc_lab::attacker::KnowledgeBase;
use edhoc_lab::term::Term;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (x, y, k) = (Term::fresh("x", 1), Term::fresh("y", 2), Term::fresh("k", 3));
    let gx = Term::exp(Term::g(), x);
    let gy = Term::exp(Term::g(), y.clone());
    let mut kb = KnowledgeBase::default();
    kb.observe(gx.clone());
    kb.observe(gy);
    kb.observe(Term::aead_encrypt(k.clone(), Term::public("secret"), Term::public("ad"), Term::public("cAEAD0")));

    let gxy = Term::exp(gx.clone(), y.clone());
    println!("g^xy derivable from g^x, g^y: {}", kb.can_derive(&gxy));
    assert!(!kb.can_derive(&gxy));
    assert!(!kb.can_derive(&Term::public("secret")) || kb.knows(&Term::public("secret")));

    kb.observe(k);
    println!("plaintext after the key leaks: {}", kb.knows(&Term::public("secret")));
    kb.observe(y);
    assert!(kb.can_derive(&gxy));

    let deep = Term::h(Term::h(Term::h(Term::h(Term::h(gxy)))));
    println!("depth-{} bound reaches h^5(g^xy): {}", kb.depth, kb.can_derive(&deep));
    let plan = kb.plan(std::slice::from_ref(&deep)).ok_or("no plan")?;
    println!("but {} recorded steps get there", plan.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
