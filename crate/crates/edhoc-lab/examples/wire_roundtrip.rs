//! Byte encoding of message 1 and the decoder's error kinds.

use std::error::Error;

use edhoc_lab::roles::AuthMethod;
use edhoc_lab::term::Term;
use edhoc_lab::wire::{decode, encode, DecodeError, Message, Message1};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let m1 = Message1 {
        method_i: AuthMethod::Stat,
        method_r: AuthMethod::Sig,
        suites_i: vec![2, 1, 0],
        g_x: Term::exp(Term::g(), Term::fresh("x", 1)),
        c_i: Term::public("cI1"),
        id_psk: None,
        ad_1: None,
    };
    let bytes = encode(&Message::M1(m1.clone()));
    println!("m1 = {}", hex::encode(&bytes));
    assert_eq!(decode(&bytes)?, Message::M1(m1));

    let mut long = bytes.clone();
    long.push(0);
    for bad in [&bytes[..7], &[7u8][..], &long[..]] {
        let e = decode(bad).unwrap_err();
        println!("{:20} {e}", e.code());
    }
    assert_eq!(decode(&[]), Err(DecodeError::Truncated));
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
