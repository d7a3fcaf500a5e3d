//! Dolev-Yao attacker: a destructor-saturated knowledge base with
//! depth-bounded construction on top.
//!
//! Derivation levels: level 0 is the saturated set plus public names and
//! the attacker's own fresh names (`~adv#n`). Level `d` adds one
//! constructor application over level `d-1` terms. Tuples and free
//! symbols take all their arguments; `exp` adds one exponent; `xor` adds
//! any number of level `d-1` elements to a sum of known XOR terms.

use std::collections::HashSet;

use crate::environment::Registry;
use crate::roles::{build_m2, InitiatorConfig, InitiatorState, MethodPair, Persona};
use crate::term::{decrypt_unchecked, Sym, Term};
use crate::wire::{encode, Message, Message1, Message2};

pub const DEFAULT_DEPTH: usize = 4;
pub const ATTACKER_FRESH: &str = "adv";

/// Above this many candidate XOR terms only pairs are tried.
const XOR_SUBSET_CAP: usize = 12;

#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    known: HashSet<Term>,
    xors: Vec<Term>,
    /// Ciphertexts and sums not yet opened; retried when knowledge grows.
    blocked: Vec<Term>,
    pub depth: usize,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        KnowledgeBase::new(DEFAULT_DEPTH)
    }
}

pub fn attacker_fresh(serial: u64) -> Term {
    Term::fresh(ATTACKER_FRESH, serial)
}

fn free_at_level_zero(t: &Term) -> bool {
    match t {
        Term::Public(_) => true,
        Term::Fresh(id, _) => id == ATTACKER_FRESH,
        _ => false,
    }
}

impl KnowledgeBase {
    pub fn new(depth: usize) -> KnowledgeBase {
        KnowledgeBase { known: HashSet::new(), xors: Vec::new(), blocked: Vec::new(), depth }
    }

    pub fn known(&self) -> impl Iterator<Item = &Term> {
        self.known.iter()
    }

    pub fn knows(&self, t: &Term) -> bool {
        self.known.contains(t) || free_at_level_zero(t)
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn observe(&mut self, t: Term) {
        let mut queue = vec![t];
        loop {
            while let Some(t) = queue.pop() {
                if !self.known.insert(t.clone()) {
                    continue;
                }
                match &t {
                    Term::Tuple(xs) => queue.extend(xs.iter().cloned()),
                    Term::App(Sym::AeadEncrypt, _) => self.blocked.push(t.clone()),
                    Term::App(Sym::Xor, _) => {
                        self.xors.push(t.clone());
                        self.blocked.push(t.clone());
                    }
                    _ => {}
                }
            }
            let mut still = Vec::new();
            for b in std::mem::take(&mut self.blocked) {
                match self.open(&b) {
                    Some(found) => queue.extend(found),
                    None => still.push(b),
                }
            }
            self.blocked = still;
            if queue.is_empty() {
                break;
            }
        }
    }

    fn open(&self, t: &Term) -> Option<Vec<Term>> {
        match t {
            Term::App(Sym::AeadEncrypt, a) => {
                if self.can_derive(&a[0]) && self.can_derive(&a[3]) {
                    decrypt_unchecked(&a[0], t, &a[3]).ok().map(|m| vec![m])
                } else {
                    None
                }
            }
            Term::App(Sym::Xor, parts) => {
                let missing: Vec<&Term> = parts.iter().filter(|p| !self.can_derive(p)).collect();
                match missing.as_slice() {
                    [] => Some(Vec::new()),
                    [one] => Some(vec![(*one).clone()]),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    pub fn can_derive(&self, t: &Term) -> bool {
        self.derive_at(t, self.depth)
    }

    pub fn can_derive_within(&self, t: &Term, depth: usize) -> bool {
        self.derive_at(t, depth)
    }

    fn derive_at(&self, t: &Term, d: usize) -> bool {
        if self.knows(t) {
            return true;
        }
        if d == 0 {
            return false;
        }
        match t {
            Term::Fresh(..) | Term::Public(_) => false,
            Term::Tuple(xs) => xs.iter().all(|x| self.derive_at(x, d - 1)),
            Term::App(Sym::Exp, args) => {
                let (base, exps) = (&args[0], &args[1..]);
                (0..exps.len()).any(|i| {
                    if i > 0 && exps[i] == exps[i - 1] {
                        return false;
                    }
                    let mut rest = exps.to_vec();
                    let e = rest.remove(i);
                    let smaller = rest.into_iter().fold(base.clone(), Term::exp);
                    self.derive_at(&e, d - 1) && self.derive_at(&smaller, d - 1)
                })
            }
            Term::App(Sym::Xor, parts) => self.derive_xor(parts, d),
            Term::App(_, args) => args.iter().all(|a| self.derive_at(a, d - 1)),
        }
    }

    fn derive_xor(&self, target: &[Term], d: usize) -> bool {
        let relevant = self.relevant_xors(target);
        let n = relevant.len();
        let try_subset = |chosen: &[&Term]| {
            let mut items: Vec<Term> = target.to_vec();
            for c in chosen {
                items.extend(c.xor_parts());
            }
            Term::xor_all(items)
                .xor_parts()
                .iter()
                .all(|e| self.derive_at(e, d - 1))
        };
        if n <= XOR_SUBSET_CAP {
            (0u32..(1 << n)).any(|mask| {
                let chosen: Vec<&Term> =
                    (0..n).filter(|i| mask & (1 << i) != 0).map(|i| relevant[i]).collect();
                try_subset(&chosen)
            })
        } else {
            try_subset(&[])
                || (0..n).any(|i| try_subset(&[relevant[i]]))
                || (0..n).any(|i| (i + 1..n).any(|j| try_subset(&[relevant[i], relevant[j]])))
        }
    }

    /// Known XOR terms connected to the target through shared elements.
    fn relevant_xors(&self, target: &[Term]) -> Vec<&Term> {
        let mut elems: HashSet<&Term> = target.iter().collect();
        let mut picked = vec![false; self.xors.len()];
        loop {
            let mut grew = false;
            for (i, x) in self.xors.iter().enumerate() {
                if picked[i] {
                    continue;
                }
                let Term::App(_, parts) = x else { continue };
                if parts.iter().any(|p| elems.contains(p)) {
                    picked[i] = true;
                    elems.extend(parts.iter());
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        let mut out: Vec<&Term> =
            self.xors.iter().zip(&picked).filter(|(_, &p)| p).map(|(x, _)| x).collect();
        out.sort_by_cached_key(|t| t.to_string());
        out
    }

    /// Terms to record, in order, so that each is one construction step
    /// above what is already derivable. `None` if some leaf is out of reach.
    pub fn plan(&self, targets: &[Term]) -> Option<Vec<Term>> {
        let mut scratch = self.clone();
        let mut out = Vec::new();
        for t in targets {
            if !scratch.plan_into(t, &mut out) {
                return None;
            }
        }
        Some(out)
    }

    fn plan_into(&mut self, t: &Term, out: &mut Vec<Term>) -> bool {
        if self.can_derive(t) {
            return true;
        }
        match t {
            Term::Fresh(..) | Term::Public(_) => false,
            Term::App(Sym::Exp, args) => {
                let (base, exps) = (&args[0], &args[1..]);
                if !self.learn(base, out) || !exps.iter().all(|e| self.learn(e, out)) {
                    return false;
                }
                let mut acc = base.clone();
                for e in exps {
                    acc = Term::exp(acc, e.clone());
                    self.record(&acc, out);
                }
                true
            }
            Term::Tuple(xs) | Term::App(_, xs) => {
                if !xs.iter().all(|x| self.learn(x, out)) {
                    return false;
                }
                self.record(t, out);
                true
            }
        }
    }

    fn learn(&mut self, t: &Term, out: &mut Vec<Term>) -> bool {
        let ok = self.plan_into(t, out);
        if ok {
            self.record(t, out);
        }
        ok
    }

    fn record(&mut self, t: &Term, out: &mut Vec<Term>) {
        if !self.knows(t) {
            out.push(t.clone());
            self.observe(t.clone());
        }
    }
}

/// Message shapes the attacker knows how to fill.
#[derive(Debug, Clone)]
pub enum Pattern {
    M1(Message1),
    /// Any message, as is.
    Raw(Message),
    /// Answer `m1` in the name of `as_id`.
    M2 { m1: Message1, as_id: String, suite: u8, y: Term, c_r: Term },
    /// Finish a run the attacker started with exponent `x`, as `as_id`.
    M3 { m1: Message1, m2: Message2, x: Term, as_id: String, peer: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Synthesized {
    pub bytes: Vec<u8>,
    /// Intermediate computations, recorded before injection.
    pub via: Vec<Term>,
}

/// Fill a message shape. Candidate secrets come from the registry; the
/// result is returned only if every term in it is derivable from `kb`.
pub fn synthesize(kb: &KnowledgeBase, reg: &Registry, pattern: &Pattern) -> Option<Synthesized> {
    let msg = match pattern {
        Pattern::M1(m) => Message::M1(m.clone()),
        Pattern::Raw(m) => m.clone(),
        Pattern::M2 { m1, as_id, suite, y, c_r } => {
            let pair = m1.pair()?;
            let (persona, psk) = if pair.is_psk() {
                let (_, v, psk) = reg.psk_by_id(m1.id_psk.as_ref()?)?;
                if v != as_id {
                    return None;
                }
                let p = Persona {
                    id: as_id.clone(),
                    method: pair.responder,
                    cred: m1.id_psk.clone()?,
                    ltk: psk.clone(),
                };
                (p, Some(psk.clone()))
            } else {
                (Persona::lookup(reg, as_id, pair.responder).ok()?, None)
            };
            Message::M2(build_m2(m1, *suite, &persona, psk.as_ref(), y, c_r).m2)
        }
        Pattern::M3 { m1, m2, x, as_id, peer } => {
            let pair: MethodPair = m1.pair()?;
            let cfg = InitiatorConfig {
                identity: as_id.clone(),
                intended_peer: peer.clone(),
                pair,
                suites: m1.suites_i.clone(),
                mitigation: false,
            };
            let mut st = InitiatorState::resume(cfg, Term::fresh(ATTACKER_FRESH, 0), x.clone(), m1.clone());
            let (m3, _) = st.i3(m2, reg).ok()?;
            Message::M3(m3)
        }
    };
    let via = kb.plan(&msg.terms())?;
    Some(Synthesized { bytes: encode(&msg), via })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(s: &str) -> Term {
        Term::fresh(s, 1)
    }

    #[test]
    fn untupling_and_decryption() {
        let mut kb = KnowledgeBase::default();
        kb.observe(Term::tuple(vec![f("a"), f("b")]));
        assert!(kb.can_derive(&f("a")) && kb.can_derive(&f("b")));
        let c = Term::aead_encrypt(f("k"), f("m"), f("ad"), Term::public("al"));
        kb.observe(c);
        assert!(!kb.can_derive(&f("m")));
        kb.observe(f("k"));
        assert!(kb.can_derive(&f("m")));
    }

    #[test]
    fn construction_rules() {
        let mut kb = KnowledgeBase::default();
        for t in [f("k"), f("m"), f("ad")] {
            kb.observe(t);
        }
        assert!(kb.can_derive(&Term::aead_encrypt(f("k"), f("m"), f("ad"), Term::public("al"))));
        let gx = Term::exp(Term::g(), f("x"));
        kb.observe(gx.clone());
        kb.observe(f("y"));
        assert!(kb.can_derive(&Term::exp(gx.clone(), f("y"))));
        let mut cdh = KnowledgeBase::default();
        cdh.observe(gx.clone());
        cdh.observe(Term::exp(Term::g(), f("y")));
        assert!(!cdh.can_derive(&Term::exp(gx, f("y"))));
    }

    #[test]
    fn one_time_pad() {
        let mut kb = KnowledgeBase::default();
        // a public plaintext gives the pad away
        kb.observe(Term::xor(Term::public("id"), f("k1")));
        assert!(kb.can_derive(&f("k1")));
        let mut kb2 = KnowledgeBase::default();
        kb2.observe(Term::xor(f("id"), f("k1")));
        assert!(!kb2.can_derive(&f("id")));
        kb2.observe(f("k1"));
        assert!(kb2.can_derive(&f("id")));
    }

    #[test]
    fn signing_needs_the_key() {
        let mut kb = KnowledgeBase::default();
        kb.observe(Term::pk(f("sk")));
        assert!(!kb.can_derive(&Term::sign(Term::public("m"), f("sk"))));
        assert!(kb.can_derive(&Term::pk(f("sk"))));
        kb.observe(f("sk"));
        assert!(kb.can_derive(&Term::sign(Term::public("m"), f("sk"))));
    }

    #[test]
    fn depth_bound_is_respected() {
        let kb = KnowledgeBase::new(2);
        let deep = Term::h(Term::h(Term::h(Term::public("a"))));
        assert!(!kb.can_derive(&deep));
        assert!(KnowledgeBase::new(3).can_derive(&deep));
        let plan = kb.plan(std::slice::from_ref(&deep)).unwrap();
        assert_eq!(plan.last(), Some(&deep));
    }

    #[test]
    fn monotone() {
        let mut kb = KnowledgeBase::default();
        let t = Term::h(f("a"));
        kb.observe(f("a"));
        assert!(kb.can_derive(&t));
        kb.observe(f("b"));
        assert!(kb.can_derive(&t));
    }
}
