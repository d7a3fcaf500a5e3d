mod common;

use proptest::prelude::*;

use edhoc_lab::attacker::KnowledgeBase;
use edhoc_lab::term::Term;

fn kb(terms: &[Term], bound: usize) -> KnowledgeBase {
    let mut kb = KnowledgeBase::new(bound);
    for t in terms {
        kb.observe(t.clone());
    }
    kb
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn can_derive_matches_enumeration((terms, target) in common::gen::instance()) {
        let expected = common::oracle::derivable(&terms, &target, 3);
        prop_assert_eq!(kb(&terms, 3).can_derive(&target), expected, "target {}", target);
    }

    #[test]
    fn knowledge_only_grows((terms, target) in common::gen::instance(), extra in common::gen::term()) {
        let before = kb(&terms, 3).can_derive(&target);
        let mut more = terms.clone();
        more.push(extra);
        prop_assert!(!before || kb(&more, 3).can_derive(&target));
    }
}

#[test]
fn oracle_sanity() {
    use common::oracle::derivable;
    let (x, y) = (Term::fresh("x", 1), Term::fresh("y", 1));
    let gx = Term::exp(Term::g(), x.clone());
    let gy = Term::exp(Term::g(), y.clone());
    let gxy = Term::exp(gx.clone(), y.clone());
    assert!(!derivable(&[gx.clone(), gy.clone()], &gxy, 3));
    assert!(derivable(&[gx.clone(), y.clone()], &gxy, 3));
    let pad = Term::xor(Term::fresh("m", 1), Term::fresh("k", 1));
    assert!(!derivable(std::slice::from_ref(&pad), &Term::fresh("m", 1), 3));
    assert!(derivable(&[pad, Term::fresh("k", 1)], &Term::fresh("m", 1), 3));
    let deep = Term::h(Term::h(Term::h(Term::h(x.clone()))));
    assert!(!derivable(std::slice::from_ref(&x), &deep, 3));
    assert!(derivable(&[x], &Term::h(Term::h(Term::h(Term::fresh("x", 1)))), 3));
}
