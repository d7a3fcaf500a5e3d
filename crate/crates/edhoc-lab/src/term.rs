//! Ground terms and the equational theory they live in.
//!
//! Every constructor here returns a term in normal form, so structural
//! equality on stored terms is equality modulo the theory.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sym {
    H,
    HkdfExtract,
    HkdfExpand,
    AeadEncrypt,
    Sign,
    Pk,
    Exp,
    Xor,
}

impl Sym {
    pub const ALL: [Sym; 8] = [
        Sym::H,
        Sym::HkdfExtract,
        Sym::HkdfExpand,
        Sym::AeadEncrypt,
        Sym::Sign,
        Sym::Pk,
        Sym::Exp,
        Sym::Xor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Sym::H => "h",
            Sym::HkdfExtract => "hkdfExtract",
            Sym::HkdfExpand => "hkdfExpand",
            Sym::AeadEncrypt => "aeadEncrypt",
            Sym::Sign => "sign",
            Sym::Pk => "pk",
            Sym::Exp => "exp",
            Sym::Xor => "xor",
        }
    }

    pub fn from_name(s: &str) -> Option<Sym> {
        Sym::ALL.into_iter().find(|sym| sym.name() == s)
    }

    /// Arity as written by callers. `exp` is binary on input; its normal
    /// form carries the base followed by the exponent multiset.
    pub fn arity(self) -> Option<usize> {
        match self {
            Sym::H | Sym::Pk => Some(1),
            Sym::HkdfExtract | Sym::HkdfExpand | Sym::Sign | Sym::Exp => Some(2),
            Sym::AeadEncrypt => Some(4),
            Sym::Xor => None,
        }
    }

    /// Symbols with no equations attached.
    pub fn is_free(self) -> bool {
        !matches!(self, Sym::Exp | Sym::Xor)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Fresh(String, u64),
    Public(String),
    Tuple(Vec<Term>),
    App(Sym, Vec<Term>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("malformed term: {0} expects {1} argument(s), got {2}")]
    Arity(&'static str, String, usize),
    #[error("malformed term text at byte {0}: {1}")]
    Parse(usize, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("decryption failure")]
    DecryptionFailure,
}

/// Source of globally unique fresh names for one simulation run.
#[derive(Debug, Clone, Default)]
pub struct Fresh {
    next: u64,
}

impl Fresh {
    pub fn name(&mut self, id: &str) -> Term {
        self.next += 1;
        Term::fresh(id, self.next)
    }

    pub fn serial(&mut self) -> u64 {
        self.next += 1;
        self.next
    }
}

pub const XOR_UNIT: &str = "zero";
pub const GENERATOR: &str = "g";
pub const EMPTY_STR: &str = "emptyStr";

impl Term {
    pub fn fresh(name: &str, serial: u64) -> Term {
        Term::Fresh(name.to_string(), serial)
    }

    pub fn public(label: &str) -> Term {
        Term::Public(label.to_string())
    }

    pub fn zero() -> Term {
        Term::public(XOR_UNIT)
    }

    pub fn g() -> Term {
        Term::public(GENERATOR)
    }

    pub fn empty_str() -> Term {
        Term::public(EMPTY_STR)
    }

    pub fn tuple(items: Vec<Term>) -> Term {
        Term::Tuple(items)
    }

    pub fn h(t: Term) -> Term {
        Term::App(Sym::H, vec![t])
    }

    pub fn hkdf_extract(salt: Term, ikm: Term) -> Term {
        Term::App(Sym::HkdfExtract, vec![salt, ikm])
    }

    pub fn hkdf_expand(info: Term, prk: Term) -> Term {
        Term::App(Sym::HkdfExpand, vec![info, prk])
    }

    pub fn aead_encrypt(k: Term, m: Term, ad: Term, alg: Term) -> Term {
        Term::App(Sym::AeadEncrypt, vec![k, m, ad, alg])
    }

    pub fn sign(m: Term, sk: Term) -> Term {
        Term::App(Sym::Sign, vec![m, sk])
    }

    pub fn pk(sk: Term) -> Term {
        Term::App(Sym::Pk, vec![sk])
    }

    pub fn exp(base: Term, e: Term) -> Term {
        exp_nf(base, vec![e])
    }

    pub fn xor(a: Term, b: Term) -> Term {
        xor_nf(vec![a, b])
    }

    pub fn xor_all(items: Vec<Term>) -> Term {
        xor_nf(items)
    }

    /// Build `sym(args)` from arbitrary (possibly non-normal) arguments.
    pub fn app(sym: Sym, args: Vec<Term>) -> Result<Term, TermError> {
        normalize(&Term::App(sym, args))
    }

    pub fn is_public(&self) -> bool {
        matches!(self, Term::Public(_))
    }

    pub fn as_tuple(&self) -> Option<&[Term]> {
        match self {
            Term::Tuple(items) => Some(items),
            _ => None,
        }
    }

    pub fn head(&self) -> Option<Sym> {
        match self {
            Term::App(s, _) => Some(*s),
            _ => None,
        }
    }

    /// Elements of an XOR sum; a non-XOR term is a sum of one.
    pub fn xor_parts(&self) -> Vec<Term> {
        match self {
            Term::App(Sym::Xor, args) => args.clone(),
            t if *t == Term::zero() => Vec::new(),
            t => vec![t.clone()],
        }
    }

    /// Base and exponent multiset; a non-exp term has no exponents.
    pub fn exp_parts(&self) -> (Term, Vec<Term>) {
        match self {
            Term::App(Sym::Exp, args) => (args[0].clone(), args[1..].to_vec()),
            t => (t.clone(), Vec::new()),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Fresh(..) | Term::Public(_) => 0,
            Term::Tuple(xs) | Term::App(_, xs) => {
                1 + xs.iter().map(Term::depth).max().unwrap_or(0)
            }
        }
    }

    pub fn subterms(&self, out: &mut Vec<Term>) {
        out.push(self.clone());
        if let Term::Tuple(xs) | Term::App(_, xs) = self {
            for x in xs {
                x.subterms(out);
            }
        }
    }
}

fn canonical_sort(items: &mut [Term]) {
    items.sort_by_cached_key(|t| t.to_string());
}

fn exp_nf(base: Term, extra: Vec<Term>) -> Term {
    let (b, mut exps) = base.exp_parts();
    exps.extend(extra);
    if exps.is_empty() {
        return b;
    }
    canonical_sort(&mut exps);
    let mut args = Vec::with_capacity(exps.len() + 1);
    args.push(b);
    args.extend(exps);
    Term::App(Sym::Exp, args)
}

fn xor_nf(items: Vec<Term>) -> Term {
    let mut flat = Vec::new();
    for t in items {
        flat.extend(t.xor_parts());
    }
    canonical_sort(&mut flat);
    let mut out: Vec<Term> = Vec::with_capacity(flat.len());
    for t in flat {
        if out.last() == Some(&t) {
            out.pop();
        } else {
            out.push(t);
        }
    }
    match out.len() {
        0 => Term::zero(),
        1 => out.pop().unwrap(),
        _ => Term::App(Sym::Xor, out),
    }
}

pub fn normalize(t: &Term) -> Result<Term, TermError> {
    match t {
        Term::Fresh(..) | Term::Public(_) => Ok(t.clone()),
        Term::Tuple(xs) => Ok(Term::Tuple(
            xs.iter().map(normalize).collect::<Result<_, _>>()?,
        )),
        Term::App(sym, xs) => {
            let args: Vec<Term> = xs.iter().map(normalize).collect::<Result<_, _>>()?;
            match sym {
                Sym::Xor => {
                    if args.len() < 2 {
                        return Err(TermError::Arity("xor", ">=2".into(), args.len()));
                    }
                    Ok(xor_nf(args))
                }
                Sym::Exp => {
                    // already-normal exp terms carry more than two arguments
                    if args.len() < 2 {
                        return Err(TermError::Arity("exp", ">=2".into(), args.len()));
                    }
                    let mut it = args.into_iter();
                    let base = it.next().unwrap();
                    Ok(exp_nf(base, it.collect()))
                }
                s => {
                    let n = s.arity().unwrap();
                    if args.len() != n {
                        return Err(TermError::Arity(s.name(), n.to_string(), args.len()));
                    }
                    Ok(Term::App(*s, args))
                }
            }
        }
    }
}

pub fn equal_mod_e(a: &Term, b: &Term) -> bool {
    match (normalize(a), normalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

pub fn aead_decrypt(k: &Term, c: &Term, ad: &Term, alg: &Term) -> Result<Term, CryptoError> {
    match c {
        Term::App(Sym::AeadEncrypt, a)
            if equal_mod_e(&a[0], k) && equal_mod_e(&a[2], ad) && equal_mod_e(&a[3], alg) =>
        {
            Ok(a[1].clone())
        }
        _ => Err(CryptoError::DecryptionFailure),
    }
}

/// The variant without the associated-data check.
pub fn decrypt_unchecked(k: &Term, c: &Term, alg: &Term) -> Result<Term, CryptoError> {
    match c {
        Term::App(Sym::AeadEncrypt, a) if equal_mod_e(&a[0], k) && equal_mod_e(&a[3], alg) => {
            Ok(a[1].clone())
        }
        _ => Err(CryptoError::DecryptionFailure),
    }
}

pub fn verify_signature(sig: &Term, msg: &Term, pubkey: &Term) -> bool {
    match sig {
        Term::App(Sym::Sign, a) => {
            equal_mod_e(&a[0], msg) && equal_mod_e(&Term::pk(a[1].clone()), pubkey)
        }
        _ => false,
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, xs: &[Term]) -> fmt::Result {
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{x}")?;
            }
            Ok(())
        }
        match self {
            Term::Fresh(name, serial) => write!(f, "~{name}#{serial}"),
            Term::Public(label) => write!(f, "${label}"),
            Term::Tuple(xs) => {
                f.write_str("<")?;
                list(f, xs)?;
                f.write_str(">")
            }
            Term::App(sym, xs) => {
                write!(f, "{}(", sym.name())?;
                list(f, xs)?;
                f.write_str(")")
            }
        }
    }
}

fn is_ident(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'.' || c == b'-'
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: &str) -> Result<T, TermError> {
        Err(TermError::Parse(self.pos, msg.to_string()))
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<&'a str, TermError> {
        let start = self.pos;
        while self.pos < self.s.len() && is_ident(self.s[self.pos]) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.err("expected identifier");
        }
        Ok(std::str::from_utf8(&self.s[start..self.pos]).unwrap())
    }

    fn list(&mut self, close: u8) -> Result<Vec<Term>, TermError> {
        let mut xs = Vec::new();
        if self.eat(close) {
            return Ok(xs);
        }
        loop {
            xs.push(self.term()?);
            if self.eat(close) {
                return Ok(xs);
            }
            if !self.eat(b',') {
                return self.err("expected ',' or closing bracket");
            }
        }
    }

    fn term(&mut self) -> Result<Term, TermError> {
        if self.eat(b'~') {
            let name = self.ident()?;
            if !self.eat(b'#') {
                return self.err("expected '#'");
            }
            let digits = self.ident()?;
            let serial = digits
                .parse()
                .map_err(|_| TermError::Parse(self.pos, "bad serial".into()))?;
            Ok(Term::Fresh(name.to_string(), serial))
        } else if self.eat(b'$') {
            Ok(Term::Public(self.ident()?.to_string()))
        } else if self.eat(b'<') {
            Ok(Term::Tuple(self.list(b'>')?))
        } else {
            let name = self.ident()?;
            let Some(sym) = Sym::from_name(name) else {
                return self.err("unknown function symbol");
            };
            if !self.eat(b'(') {
                return self.err("expected '('");
            }
            Ok(Term::App(sym, self.list(b')')?))
        }
    }
}

impl FromStr for Term {
    type Err = TermError;

    fn from_str(s: &str) -> Result<Term, TermError> {
        let mut p = Parser { s: s.as_bytes(), pos: 0 };
        let t = p.term()?;
        if p.pos != s.len() {
            return p.err("trailing input");
        }
        normalize(&t)
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Term, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> Term {
        Term::fresh(s, 0)
    }

    #[test]
    fn dh_commutes() {
        let (x, y) = (n("x"), n("y"));
        let a = Term::exp(Term::exp(Term::g(), x.clone()), y.clone());
        let b = Term::exp(Term::exp(Term::g(), y), x);
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "exp($g,~x#0,~y#0)");
    }

    #[test]
    fn xor_laws() {
        let (a, b) = (n("a"), n("b"));
        assert_eq!(Term::xor(a.clone(), Term::xor(a.clone(), b.clone())), b);
        assert_eq!(Term::xor(a.clone(), Term::zero()), a);
        assert_eq!(Term::xor(a.clone(), a.clone()), Term::zero());
        assert!(equal_mod_e(&Term::xor(a.clone(), b.clone()), &Term::xor(b, a)));
    }

    #[test]
    fn hashes_do_not_collide() {
        assert!(!equal_mod_e(&Term::h(n("a")), &Term::h(n("b"))));
    }

    #[test]
    fn tuples_stay_nested() {
        let (a, b, c) = (n("a"), n("b"), n("c"));
        let left = Term::tuple(vec![a.clone(), Term::tuple(vec![b.clone(), c.clone()])]);
        assert_ne!(left, Term::tuple(vec![a, b, c]));
    }

    #[test]
    fn aead_equations() {
        let (k, k2, m, ad, ad2, al) = (n("k"), n("k2"), n("m"), n("ad"), n("ad2"), n("al"));
        let c = Term::aead_encrypt(k.clone(), m.clone(), ad.clone(), al.clone());
        assert_eq!(aead_decrypt(&k, &c, &ad, &al), Ok(m.clone()));
        assert!(aead_decrypt(&k2, &c, &ad, &al).is_err());
        assert!(aead_decrypt(&k, &c, &ad2, &al).is_err());
        assert_eq!(decrypt_unchecked(&k, &c, &al), Ok(m));
        assert!(decrypt_unchecked(&k2, &c, &al).is_err());
        assert!(decrypt_unchecked(&k, &Term::h(n("x")), &al).is_err());
    }

    #[test]
    fn signatures() {
        let (m, m2, sk, sk2) = (n("m"), n("m2"), n("sk"), n("sk2"));
        let s = Term::sign(m.clone(), sk.clone());
        assert!(verify_signature(&s, &m, &Term::pk(sk.clone())));
        assert!(!verify_signature(&s, &m2, &Term::pk(sk)));
        assert!(!verify_signature(&s, &m, &Term::pk(sk2)));
    }

    #[test]
    fn arity_is_checked() {
        assert!(Term::app(Sym::H, vec![]).is_err());
        assert!(Term::app(Sym::Xor, vec![n("a")]).is_err());
        assert!(Term::app(Sym::AeadEncrypt, vec![n("a"); 3]).is_err());
        assert!("h(~a#0,~b#0)".parse::<Term>().is_err());
    }

    #[test]
    fn render_parse_roundtrip() {
        let t = Term::tuple(vec![
            Term::xor(n("k"), Term::public("V")),
            Term::exp(Term::exp(Term::g(), n("y")), n("x")),
            Term::tuple(vec![]),
            Term::hkdf_expand(Term::tuple(vec![Term::public("a0")]), n("p")),
        ]);
        let s = t.to_string();
        assert_eq!(s.parse::<Term>().unwrap(), t);
        assert_eq!(s.parse::<Term>().unwrap().to_string(), s);
        assert!("<$a,".parse::<Term>().is_err());
        assert!("foo($a)".parse::<Term>().is_err());
        assert!("$a)".parse::<Term>().is_err());
    }
}
