//! The equational theory: DH exponents commute, XOR cancels, and
//! decryption only opens what the right key sealed.

use std::error::Error;

use edhoc_lab::term::{aead_decrypt, equal_mod_e, verify_signature, Term};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let (x, y) = (Term::fresh("x", 1), Term::fresh("y", 2));
    let gxy = Term::exp(Term::exp(Term::g(), x.clone()), y.clone());
    let gyx = Term::exp(Term::exp(Term::g(), y), x);
    println!("g^x^y = {gxy}");
    assert!(equal_mod_e(&gxy, &gyx));

    let k = Term::fresh("k", 3);
    let pad = Term::xor(Term::public("ID_CRED_R"), k.clone());
    println!("pad   = {pad}");
    assert_eq!(Term::xor(pad, k.clone()), Term::public("ID_CRED_R"));
    assert_eq!(Term::xor(k.clone(), k.clone()), Term::zero());

    let alg = Term::public("cAEAD0");
    let c = Term::aead_encrypt(k.clone(), Term::public("m"), Term::public("ad"), alg.clone());
    assert_eq!(aead_decrypt(&k, &c, &Term::public("ad"), &alg)?, Term::public("m"));
    assert!(aead_decrypt(&Term::fresh("k", 4), &c, &Term::public("ad"), &alg).is_err());

    let ltk = Term::fresh("ltk", 5);
    let sig = Term::sign(Term::public("m"), ltk.clone());
    assert!(verify_signature(&sig, &Term::public("m"), &Term::pk(ltk)));

    let parsed: Term = "exp($g,~y#2,~x#1)".parse()?;
    println!("parsed {parsed}, same as g^x^y: {}", parsed == gxy);
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
