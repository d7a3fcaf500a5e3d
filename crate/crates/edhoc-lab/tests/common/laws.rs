use proptest::prelude::*;

use edhoc_lab::term::{aead_decrypt, normalize, verify_signature, Term};

pub fn normal_form(t: &Term) -> Result<(), TestCaseError> {
    let n = normalize(t).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(&n, t);
    prop_assert_eq!(normalize(&n).unwrap(), n.clone());
    let back: Term = n.to_string().parse().map_err(|e: edhoc_lab::term::TermError| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(back, n);
    Ok(())
}

pub fn xor_group(a: &Term, b: &Term, c: &Term) -> Result<(), TestCaseError> {
    let x = Term::xor;
    prop_assert_eq!(x(a.clone(), x(b.clone(), c.clone())), x(x(a.clone(), b.clone()), c.clone()));
    prop_assert_eq!(x(a.clone(), b.clone()), x(b.clone(), a.clone()));
    prop_assert_eq!(x(a.clone(), Term::zero()), a.clone());
    prop_assert_eq!(x(a.clone(), a.clone()), Term::zero());
    prop_assert_eq!(x(x(a.clone(), b.clone()), b.clone()), a.clone());
    Ok(())
}

pub fn dh_commutes(base: &Term, a: &Term, b: &Term) -> Result<(), TestCaseError> {
    let ab = Term::exp(Term::exp(base.clone(), a.clone()), b.clone());
    let ba = Term::exp(Term::exp(base.clone(), b.clone()), a.clone());
    prop_assert_eq!(ab, ba);
    Ok(())
}

pub fn cancellation(k: &Term, m: &Term, ad: &Term, other: &Term) -> Result<(), TestCaseError> {
    let al = Term::public("al");
    let c = Term::aead_encrypt(k.clone(), m.clone(), ad.clone(), al.clone());
    prop_assert_eq!(aead_decrypt(k, &c, ad, &al).unwrap(), m.clone());
    if other != k {
        prop_assert!(aead_decrypt(other, &c, ad, &al).is_err());
    }
    let s = Term::sign(m.clone(), k.clone());
    prop_assert!(verify_signature(&s, m, &Term::pk(k.clone())));
    if other != k {
        prop_assert!(!verify_signature(&s, m, &Term::pk(other.clone())));
    }
    Ok(())
}
