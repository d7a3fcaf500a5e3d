//! Messages, their byte encoding, and the lagging transcript hash chain.
//!
//! Encoding: one type byte, then each field as a big-endian `u32` length
//! followed by its bytes. Terms travel as their canonical text. An absent
//! optional term is a zero-length field.

use thiserror::Error;

use crate::roles::{AuthMethod, MethodPair};
use crate::term::{Term, TermError};

pub const MAX_SUITE: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message1 {
    pub method_i: AuthMethod,
    pub method_r: AuthMethod,
    pub suites_i: Vec<u8>,
    pub g_x: Term,
    pub c_i: Term,
    pub id_psk: Option<Term>,
    pub ad_1: Option<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message2 {
    pub c_i: Term,
    pub g_y: Term,
    pub c_r: Term,
    pub ciphertext_2: Term,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message3 {
    pub c_r: Term,
    pub ciphertext_3: Term,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    M1(Message1),
    M2(Message2),
    M3(Message3),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated input")]
    Truncated,
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("invariant violation: {0}")]
    Invariant(&'static str),
    #[error(transparent)]
    MalformedTerm(#[from] TermError),
    #[error("{0} trailing byte(s)")]
    Trailing(usize),
}

impl DecodeError {
    pub fn code(&self) -> &'static str {
        match self {
            DecodeError::Truncated => "truncated",
            DecodeError::UnknownType(_) => "unknown-type",
            DecodeError::Invariant(_) => "invariant-violation",
            DecodeError::MalformedTerm(_) => "malformed-term",
            DecodeError::Trailing(_) => "trailing-bytes",
        }
    }
}

impl Message1 {
    pub fn pair(&self) -> Option<MethodPair> {
        MethodPair::new(self.method_i, self.method_r)
    }

    pub fn check(&self) -> Result<(), DecodeError> {
        let pair = self.pair().ok_or(DecodeError::Invariant("invalid method pair"))?;
        if self.id_psk.is_some() != (pair == MethodPair::PSK_PSK) {
            return Err(DecodeError::Invariant("id_psk present iff PSK-PSK"));
        }
        if self.suites_i.is_empty() {
            return Err(DecodeError::Invariant("empty suite list"));
        }
        if self.suites_i.iter().any(|&s| s > MAX_SUITE) {
            return Err(DecodeError::Invariant("unknown suite label"));
        }
        Ok(())
    }

    /// The term form hashed into TH_2.
    pub fn to_term(&self) -> Term {
        let mut items = vec![
            Term::public(self.method_i.label()),
            Term::public(self.method_r.label()),
            Term::tuple(
                self.suites_i
                    .iter()
                    .map(|s| Term::public(&format!("cSUITE{s}")))
                    .collect(),
            ),
            self.g_x.clone(),
            self.c_i.clone(),
        ];
        items.extend(self.id_psk.iter().cloned());
        items.extend(self.ad_1.iter().cloned());
        Term::tuple(items)
    }

    /// Terms an observer learns from this message.
    pub fn terms(&self) -> Vec<Term> {
        let mut v = vec![self.to_term()];
        v.extend(self.id_psk.iter().cloned());
        v
    }
}

impl Message2 {
    pub fn data_2(&self) -> Term {
        Term::tuple(vec![self.c_i.clone(), self.g_y.clone(), self.c_r.clone()])
    }

    pub fn terms(&self) -> Vec<Term> {
        vec![self.c_i.clone(), self.g_y.clone(), self.c_r.clone(), self.ciphertext_2.clone()]
    }
}

impl Message3 {
    pub fn terms(&self) -> Vec<Term> {
        vec![self.c_r.clone(), self.ciphertext_3.clone()]
    }
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::M1(_) => "m1",
            Message::M2(_) => "m2",
            Message::M3(_) => "m3",
        }
    }

    pub fn terms(&self) -> Vec<Term> {
        match self {
            Message::M1(m) => m.terms(),
            Message::M2(m) => m.terms(),
            Message::M3(m) => m.terms(),
        }
    }
}

fn put(out: &mut Vec<u8>, field: &[u8]) {
    out.extend_from_slice(&(field.len() as u32).to_be_bytes());
    out.extend_from_slice(field);
}

fn put_term(out: &mut Vec<u8>, t: &Term) {
    put(out, t.to_string().as_bytes());
}

fn put_opt(out: &mut Vec<u8>, t: &Option<Term>) {
    match t {
        Some(t) => put_term(out, t),
        None => put(out, &[]),
    }
}

pub fn encode(msg: &Message) -> Vec<u8> {
    let mut out = Vec::new();
    match msg {
        Message::M1(m) => {
            out.push(1);
            put(&mut out, m.method_i.label().as_bytes());
            put(&mut out, m.method_r.label().as_bytes());
            put(&mut out, &m.suites_i);
            put_term(&mut out, &m.g_x);
            put_term(&mut out, &m.c_i);
            put_opt(&mut out, &m.id_psk);
            put_opt(&mut out, &m.ad_1);
        }
        Message::M2(m) => {
            out.push(2);
            put_term(&mut out, &m.c_i);
            put_term(&mut out, &m.g_y);
            put_term(&mut out, &m.c_r);
            put_term(&mut out, &m.ciphertext_2);
        }
        Message::M3(m) => {
            out.push(3);
            put_term(&mut out, &m.c_r);
            put_term(&mut out, &m.ciphertext_3);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn field(&mut self) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < 4 {
            return Err(DecodeError::Truncated);
        }
        let (len, rest) = self.buf.split_at(4);
        let len = u32::from_be_bytes(len.try_into().unwrap()) as usize;
        if rest.len() < len {
            return Err(DecodeError::Truncated);
        }
        let (f, rest) = rest.split_at(len);
        self.buf = rest;
        Ok(f)
    }

    fn text(&mut self) -> Result<&'a str, DecodeError> {
        std::str::from_utf8(self.field()?).map_err(|_| DecodeError::Invariant("non-utf8 field"))
    }

    fn term(&mut self) -> Result<Term, DecodeError> {
        Ok(self.text()?.parse()?)
    }

    fn opt_term(&mut self) -> Result<Option<Term>, DecodeError> {
        let s = self.text()?;
        if s.is_empty() {
            Ok(None)
        } else {
            Ok(Some(s.parse()?))
        }
    }

    fn method(&mut self) -> Result<AuthMethod, DecodeError> {
        AuthMethod::from_label(self.text()?).ok_or(DecodeError::Invariant("unknown method"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    let (&ty, rest) = bytes.split_first().ok_or(DecodeError::Truncated)?;
    let mut r = Reader { buf: rest };
    let msg = match ty {
        1 => {
            let m = Message1 {
                method_i: r.method()?,
                method_r: r.method()?,
                suites_i: r.field()?.to_vec(),
                g_x: r.term()?,
                c_i: r.term()?,
                id_psk: r.opt_term()?,
                ad_1: r.opt_term()?,
            };
            m.check()?;
            Message::M1(m)
        }
        2 => Message::M2(Message2 {
            c_i: r.term()?,
            g_y: r.term()?,
            c_r: r.term()?,
            ciphertext_2: r.term()?,
        }),
        3 => Message::M3(Message3 {
            c_r: r.term()?,
            ciphertext_3: r.term()?,
        }),
        t => return Err(DecodeError::UnknownType(t)),
    };
    if !r.buf.is_empty() {
        return Err(DecodeError::Trailing(r.buf.len()));
    }
    Ok(msg)
}

pub fn compute_th2(hash_alg: &Term, m1: &Message1, data_2: &Term) -> Term {
    Term::h(Term::tuple(vec![hash_alg.clone(), m1.to_term(), data_2.clone()]))
}

pub fn compute_th3(th_2: &Term, ciphertext_2: &Term, c_r: &Term) -> Term {
    Term::h(Term::tuple(vec![th_2.clone(), ciphertext_2.clone(), c_r.clone()]))
}

pub fn compute_th4(th_3: &Term, ciphertext_3: &Term) -> Term {
    Term::h(Term::tuple(vec![th_3.clone(), ciphertext_3.clone()]))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptHashes {
    pub hash_alg: Term,
    pub th_2: Option<Term>,
    pub th_3: Option<Term>,
    pub th_4: Option<Term>,
}

impl TranscriptHashes {
    pub fn new(hash_alg: Term) -> TranscriptHashes {
        TranscriptHashes { hash_alg, th_2: None, th_3: None, th_4: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_m1() -> Message1 {
        Message1 {
            method_i: AuthMethod::Sig,
            method_r: AuthMethod::Sig,
            suites_i: vec![0],
            g_x: Term::exp(Term::g(), Term::fresh("x", 1)),
            c_i: Term::public("c1"),
            id_psk: None,
            ad_1: None,
        }
    }

    #[test]
    fn m1_roundtrip_and_order() {
        let m = sample_m1();
        let bytes = encode(&Message::M1(m.clone()));
        assert_eq!(decode(&bytes), Ok(Message::M1(m.clone())));
        let mut a = m.clone();
        a.suites_i = vec![2, 1, 0];
        let mut b = m;
        b.suites_i = vec![0, 1, 2];
        assert_ne!(encode(&Message::M1(a)), encode(&Message::M1(b)));
    }

    #[test]
    fn decode_errors_are_distinct() {
        assert_eq!(decode(&[]), Err(DecodeError::Truncated));
        assert_eq!(decode(&[9]), Err(DecodeError::UnknownType(9)));
        let mut m = sample_m1();
        m.id_psk = Some(Term::public("psk1"));
        let bytes = encode(&Message::M1(m));
        assert!(matches!(decode(&bytes), Err(DecodeError::Invariant(_))));
        let mut ok = encode(&Message::M1(sample_m1()));
        ok.push(0);
        assert_eq!(decode(&ok), Err(DecodeError::Trailing(1)));
        let full = encode(&Message::M1(sample_m1()));
        for cut in 0..full.len() {
            assert!(decode(&full[..cut]).is_err());
        }
    }

    #[test]
    fn th2_ignores_ciphertext() {
        let m1 = sample_m1();
        let data_2 = Term::tuple(vec![m1.c_i.clone(), Term::fresh("gy", 2), Term::public("c2")]);
        let th2 = compute_th2(&Term::public("cHash0"), &m1, &data_2);
        let c_a = compute_th3(&th2, &Term::fresh("ct", 1), &Term::public("c2"));
        let c_b = compute_th3(&th2, &Term::fresh("ct", 2), &Term::public("c2"));
        assert_ne!(c_a, c_b);
        assert!(!th2.to_string().contains("~ct"));
    }
}
