//! The joint key hierarchy shared by all five methods.

use thiserror::Error;

use crate::term::Term;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("semi-static DH secret required but missing")]
    MissingSemiStatic,
    #[error("unknown key label {0:?}")]
    UnknownLabel(String),
}

pub const LABELS: [&str; 5] = ["K_2e", "K_2m", "K_3ae", "K_3m", "K_2ae"];

pub fn derive_prk_2e(seed: &Term, g_xy: &Term) -> Term {
    Term::hkdf_extract(seed.clone(), g_xy.clone())
}

pub fn derive_prk_3e2m(
    prk_2e: &Term,
    responder_uses_stat: bool,
    g_rx: Option<&Term>,
) -> Result<Term, KeyError> {
    step(prk_2e, responder_uses_stat, g_rx)
}

pub fn derive_prk_4x3m(
    prk_3e2m: &Term,
    initiator_uses_stat: bool,
    g_iy: Option<&Term>,
) -> Result<Term, KeyError> {
    step(prk_3e2m, initiator_uses_stat, g_iy)
}

fn step(prk: &Term, stat: bool, secret: Option<&Term>) -> Result<Term, KeyError> {
    if !stat {
        return Ok(prk.clone());
    }
    let s = secret.ok_or(KeyError::MissingSemiStatic)?;
    Ok(Term::hkdf_extract(prk.clone(), s.clone()))
}

pub fn derive_key(
    prk: &Term,
    th: &Term,
    label: &str,
    slot: Option<u32>,
    aead_alg: &Term,
) -> Result<Term, KeyError> {
    if !LABELS.contains(&label) {
        return Err(KeyError::UnknownLabel(label.to_string()));
    }
    let mut info = vec![aead_alg.clone(), th.clone(), Term::public(label)];
    if let Some(i) = slot {
        info.push(Term::public(&i.to_string()));
    }
    Ok(Term::hkdf_expand(Term::tuple(info), prk.clone()))
}

pub fn exporter(prk_4x3m: &Term, th_4: &Term, export_label: &str) -> Term {
    Term::hkdf_expand(
        Term::tuple(vec![th_4.clone(), Term::public(export_label)]),
        prk_4x3m.clone(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeySchedule {
    pub g_xy: Term,
    pub g_rx: Option<Term>,
    pub g_iy: Option<Term>,
    pub prk_2e: Term,
    pub prk_3e2m: Term,
    pub prk_4x3m: Option<Term>,
    pub aead_alg: Term,
    pub hash_alg: Term,
}

impl KeySchedule {
    /// Everything computable once message 2 is known. `prk_4x3m` waits on
    /// the initiator's identity when the initiator uses STAT.
    pub fn start(
        seed: &Term,
        g_xy: Term,
        g_rx: Option<Term>,
        aead_alg: Term,
        hash_alg: Term,
    ) -> KeySchedule {
        let prk_2e = derive_prk_2e(seed, &g_xy);
        let prk_3e2m = derive_prk_3e2m(&prk_2e, g_rx.is_some(), g_rx.as_ref()).unwrap();
        KeySchedule {
            g_xy,
            g_rx,
            g_iy: None,
            prk_2e,
            prk_3e2m,
            prk_4x3m: None,
            aead_alg,
            hash_alg,
        }
    }

    pub fn finish(&mut self, g_iy: Option<Term>) -> Term {
        let prk = derive_prk_4x3m(&self.prk_3e2m, g_iy.is_some(), g_iy.as_ref()).unwrap();
        self.g_iy = g_iy;
        self.prk_4x3m = Some(prk.clone());
        prk
    }

    pub fn key(&self, prk: &Term, th: &Term, label: &str) -> Term {
        derive_key(prk, th, label, None, &self.aead_alg).unwrap()
    }

    pub fn keystream(&self, th: &Term, slot: u32) -> Term {
        derive_key(&self.prk_2e, th, "K_2e", Some(slot), &self.aead_alg).unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MessageKeys {
    pub k_2e: Option<Term>,
    pub k_2e_slots: Vec<Term>,
    pub k_2m: Option<Term>,
    pub k_3ae: Option<Term>,
    pub k_3m: Option<Term>,
    pub k_2ae: Option<Term>,
}

impl MessageKeys {
    pub fn all(&self) -> Vec<Term> {
        let mut v: Vec<Term> = [&self.k_2e, &self.k_2m, &self.k_3ae, &self.k_3m, &self.k_2ae]
            .into_iter()
            .flatten()
            .cloned()
            .collect();
        v.extend(self.k_2e_slots.iter().cloned());
        v
    }
}
