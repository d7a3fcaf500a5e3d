use proptest::prelude::*;

use edhoc_lab::term::Term;

pub fn names() -> Vec<Term> {
    let mut v: Vec<Term> = ["a", "b", "c", "d", "e"].iter().map(|n| Term::fresh(n, 1)).collect();
    v.extend([Term::public("p"), Term::public("q"), Term::fresh("adv", 0), Term::g()]);
    v
}

/// Terms over `pool` with at most `depth` constructor layers.
pub fn term_over(pool: Vec<Term>, depth: u32) -> BoxedStrategy<Term> {
    prop::sample::select(pool)
        .prop_recursive(depth, 24, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..=3).prop_map(Term::tuple),
                inner.clone().prop_map(Term::h),
                inner.clone().prop_map(Term::pk),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::hkdf_extract(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::sign(a, b)),
                (inner.clone(), inner.clone(), inner.clone())
                    .prop_map(|(k, m, ad)| Term::aead_encrypt(k, m, ad, Term::public("al"))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::exp(a, b)),
                prop::collection::vec(inner, 2..=3).prop_map(Term::xor_all),
            ]
        })
        .boxed()
}

pub fn term() -> BoxedStrategy<Term> {
    term_over(names(), 3)
}

/// A knowledge base of at most six terms and a target built partly from
/// its pieces.
pub fn instance() -> BoxedStrategy<(Vec<Term>, Term)> {
    prop::collection::vec(term_over(names(), 3), 1..=6)
        .prop_flat_map(|kb| {
            let mut subs = Vec::new();
            for t in &kb {
                t.subterms(&mut subs);
            }
            let mut shallow: Vec<Term> = subs.iter().filter(|t| t.depth() <= 1).cloned().collect();
            shallow.extend(names());
            let target = prop_oneof![
                1 => prop::sample::select(subs),
                3 => term_over(shallow, 2),
            ];
            (Just(kb), target)
        })
        .boxed()
}
