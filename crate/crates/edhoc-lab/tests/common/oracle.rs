//! Reference deduction: enumerate, level by level, every term of a finite
//! universe the attacker can build, bottom-up. Shares no code with the
//! knowledge base beyond term construction.

use std::collections::{BTreeMap, BTreeSet};

use edhoc_lab::term::{Sym, Term};

type Set = BTreeSet<Term>;

fn is_free_name(t: &Term) -> bool {
    match t {
        Term::Public(_) => true,
        Term::Fresh(n, _) => n == "adv",
        _ => false,
    }
}

fn exp_subsets(base: &Term, exps: &[Term], out: &mut Set) {
    let n = exps.len();
    for mask in 1u32..(1 << n) {
        let t = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .fold(base.clone(), |acc, i| Term::exp(acc, exps[i].clone()));
        out.insert(t);
    }
}

/// Subterms of `seeds`, closed under taking partial exponent sets.
pub fn universe(seeds: &[Term]) -> Set {
    let mut subs = Vec::new();
    for s in seeds {
        s.subterms(&mut subs);
    }
    let mut u: Set = subs.into_iter().collect();
    let exps: Vec<Term> = u.iter().filter(|t| t.head() == Some(Sym::Exp)).cloned().collect();
    for e in exps {
        let (base, es) = e.exp_parts();
        exp_subsets(&base, &es, &mut u);
    }
    u
}

/// Is `target` in the GF(2) span of `vectors`, ignoring coordinates in `free`?
fn in_span(target: &[Term], vectors: &[Vec<Term>], free: &Set) -> bool {
    let project = |v: &[Term]| -> Set { v.iter().filter(|e| !free.contains(*e)).cloned().collect() };
    let mut basis: BTreeMap<Term, Set> = BTreeMap::new();
    let reduce = |mut v: Set, basis: &BTreeMap<Term, Set>| -> Set {
        while let Some(p) = v.iter().next_back().cloned() {
            match basis.get(&p) {
                Some(b) => v = v.symmetric_difference(b).cloned().collect(),
                None => break,
            }
        }
        v
    };
    for v in vectors {
        let r = reduce(project(v), &basis);
        if let Some(p) = r.iter().next_back().cloned() {
            basis.insert(p, r);
        }
    }
    reduce(project(target), &basis).is_empty()
}

/// Everything in `u` derivable within `bound` steps from the saturated `s`.
pub fn levels(s: &Set, u: &Set, bound: usize) -> Set {
    let mut l: Set = u.iter().filter(|t| s.contains(*t) || is_free_name(t)).cloned().collect();
    l.extend(s.iter().cloned());
    let kxor: Vec<Vec<Term>> = s.iter().filter(|t| t.head() == Some(Sym::Xor)).map(Term::xor_parts).collect();
    let mut bases = Set::new();
    let mut exponents = Set::new();
    for t in u.iter().filter(|t| t.head() == Some(Sym::Exp)) {
        let (b, es) = t.exp_parts();
        bases.insert(b);
        exponents.extend(es);
    }
    for _ in 0..bound {
        let prev = l.clone();
        for t in u {
            if prev.contains(t) {
                continue;
            }
            let ok = match t {
                Term::Tuple(xs) => xs.iter().all(|x| prev.contains(x)),
                Term::App(Sym::Xor, parts) => in_span(parts, &kxor, &prev),
                Term::App(Sym::Exp, _) => false,
                Term::App(_, xs) => xs.iter().all(|x| prev.contains(x)),
                _ => false,
            };
            if ok {
                l.insert(t.clone());
            }
        }
        let left: Vec<&Term> = prev.iter().filter(|a| bases.contains(*a) || a.head() == Some(Sym::Exp)).collect();
        let right: Vec<&Term> = prev.iter().filter(|b| exponents.contains(*b)).collect();
        for a in &left {
            for b in &right {
                let c = Term::exp((*a).clone(), (*b).clone());
                if u.contains(&c) {
                    l.insert(c);
                }
            }
        }
    }
    l
}

/// Saturate `kb` under untupling, decryption with a derivable key, and
/// XOR with every element but one derivable.
pub fn saturate(kb: &[Term], u: &Set, bound: usize) -> Set {
    let mut s: Set = kb.iter().cloned().collect();
    loop {
        let l = levels(&s, u, bound);
        let mut new = Vec::new();
        for t in &s {
            match t {
                Term::Tuple(xs) => new.extend(xs.iter().cloned()),
                Term::App(Sym::AeadEncrypt, a) if l.contains(&a[0]) && l.contains(&a[3]) => new.push(a[1].clone()),
                Term::App(Sym::Xor, parts) => {
                    let missing: Vec<&Term> = parts.iter().filter(|p| !l.contains(*p)).collect();
                    if missing.len() == 1 {
                        new.push(missing[0].clone());
                    }
                }
                _ => {}
            }
        }
        let before = s.len();
        s.extend(new);
        if s.len() == before {
            return s;
        }
    }
}

pub fn derivable(kb: &[Term], target: &Term, bound: usize) -> bool {
    let mut seeds = kb.to_vec();
    seeds.push(target.clone());
    let u = universe(&seeds);
    let s = saturate(kb, &u, bound);
    levels(&s, &u, bound).contains(target)
}
