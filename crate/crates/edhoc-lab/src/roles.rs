//! Initiator and responder state machines (I1, R2, I3, R4) for all five
//! method pairs, plus multi-run cipher-suite negotiation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::environment::{Event, Registry};
use crate::key_schedule::{exporter, KeySchedule, MessageKeys};
use crate::term::{aead_decrypt, verify_signature, Fresh, Term};
use crate::wire::{
    compute_th2, compute_th3, compute_th4, encode, Message, Message1, Message2, Message3,
    TranscriptHashes,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AuthMethod {
    Sig,
    Stat,
    Psk,
}

impl AuthMethod {
    pub fn label(self) -> &'static str {
        match self {
            AuthMethod::Sig => "SIG",
            AuthMethod::Stat => "STAT",
            AuthMethod::Psk => "PSK",
        }
    }

    pub fn from_label(s: &str) -> Option<AuthMethod> {
        match s.to_ascii_uppercase().as_str() {
            "SIG" => Some(AuthMethod::Sig),
            "STAT" => Some(AuthMethod::Stat),
            "PSK" => Some(AuthMethod::Psk),
            _ => None,
        }
    }
}

impl Serialize for AuthMethod {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for AuthMethod {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<AuthMethod, D::Error> {
        let s = String::deserialize(d)?;
        AuthMethod::from_label(&s).ok_or_else(|| serde::de::Error::custom("unknown method"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MethodPair {
    pub initiator: AuthMethod,
    pub responder: AuthMethod,
}

impl MethodPair {
    pub const SIG_SIG: MethodPair = MethodPair { initiator: AuthMethod::Sig, responder: AuthMethod::Sig };
    pub const SIG_STAT: MethodPair = MethodPair { initiator: AuthMethod::Sig, responder: AuthMethod::Stat };
    pub const STAT_SIG: MethodPair = MethodPair { initiator: AuthMethod::Stat, responder: AuthMethod::Sig };
    pub const STAT_STAT: MethodPair = MethodPair { initiator: AuthMethod::Stat, responder: AuthMethod::Stat };
    pub const PSK_PSK: MethodPair = MethodPair { initiator: AuthMethod::Psk, responder: AuthMethod::Psk };

    pub const ALL: [MethodPair; 5] = [
        MethodPair::SIG_SIG,
        MethodPair::SIG_STAT,
        MethodPair::STAT_SIG,
        MethodPair::STAT_STAT,
        MethodPair::PSK_PSK,
    ];

    /// PSK never mixes with the other methods.
    pub fn new(initiator: AuthMethod, responder: AuthMethod) -> Option<MethodPair> {
        let psk_i = initiator == AuthMethod::Psk;
        let psk_r = responder == AuthMethod::Psk;
        (psk_i == psk_r).then_some(MethodPair { initiator, responder })
    }

    pub fn is_psk(self) -> bool {
        self == MethodPair::PSK_PSK
    }

    pub fn initiator_stat(self) -> bool {
        self.initiator == AuthMethod::Stat
    }

    pub fn responder_stat(self) -> bool {
        self.responder == AuthMethod::Stat
    }
}

impl fmt::Display for MethodPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(&format!("{}-{}", self.initiator.label(), self.responder.label()))
    }
}

impl FromStr for MethodPair {
    type Err = String;

    fn from_str(s: &str) -> Result<MethodPair, String> {
        let (a, b) = s.split_once('-').ok_or_else(|| format!("bad method pair {s:?}"))?;
        let a = AuthMethod::from_label(a).ok_or_else(|| format!("bad method {a:?}"))?;
        let b = AuthMethod::from_label(b).ok_or_else(|| format!("bad method {b:?}"))?;
        MethodPair::new(a, b).ok_or_else(|| format!("invalid method pair {s:?}"))
    }
}

impl Serialize for MethodPair {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodPair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<MethodPair, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

pub fn aead_alg(suite: u8) -> Term {
    Term::public(&format!("cAEAD{suite}"))
}

pub fn hash_alg(suite: u8) -> Term {
    Term::public(&format!("cHash{suite}"))
}

pub fn identity(id: &str) -> Term {
    Term::public(id)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoleError {
    #[error("identity {0} has no {1} credential")]
    Unregistered(String, &'static str),
    #[error("no pre-shared key for the pair")]
    MissingPsk,
    #[error("operation out of step order")]
    OutOfOrder,
    #[error("unexpected connection identifier")]
    WrongConnection,
    #[error("malformed ciphertext")]
    Malformed,
    #[error("unknown credential identifier")]
    UnknownCredential,
    #[error("authentication failure")]
    AuthFailure,
    #[error("peer identity differs from the intended peer")]
    UnintendedPeer,
    #[error("suite rejected")]
    Rejected(Rejection),
}

impl RoleError {
    pub fn code(&self) -> &'static str {
        match self {
            RoleError::Unregistered(..) => "unregistered",
            RoleError::MissingPsk => "missing-psk",
            RoleError::OutOfOrder => "out-of-order",
            RoleError::WrongConnection => "wrong-connection",
            RoleError::Malformed => "malformed",
            RoleError::UnknownCredential => "unknown-credential",
            RoleError::AuthFailure => "auth-failure",
            RoleError::UnintendedPeer => "unintended-peer",
            RoleError::Rejected(Rejection::Counter(_)) => "suite-counter-proposal",
            RoleError::Rejected(Rejection::Final) => "rejected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    Counter(u8),
    Final,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitiatorConfig {
    pub identity: String,
    pub intended_peer: String,
    pub pair: MethodPair,
    pub suites: Vec<u8>,
    #[serde(default)]
    pub mitigation: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponderConfig {
    pub identity: String,
    pub supported_suites: BTreeSet<u8>,
    pub accepted_pairs: Vec<MethodPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitiatorStep {
    Fresh,
    SentM1,
    Done,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponderStep {
    Fresh,
    SentM2,
    Done,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionKeyMaterial {
    pub exp_sk: Term,
    pub imp_sk: Term,
}

impl SessionKeyMaterial {
    pub fn new(g_xy: &Term, g_rx: Option<&Term>, g_iy: Option<&Term>) -> SessionKeyMaterial {
        let mut exp = vec![g_xy.clone()];
        exp.extend(g_rx.cloned());
        let mut imp = exp.clone();
        imp.extend(g_iy.cloned());
        SessionKeyMaterial { exp_sk: Term::tuple(exp), imp_sk: Term::tuple(imp) }
    }
}

#[derive(Debug, Clone)]
pub struct InitiatorState {
    pub tid: Term,
    pub cfg: InitiatorConfig,
    pub x: Term,
    pub c_i: Term,
    pub step: InitiatorStep,
    pub m1: Message1,
    pub peer: Option<String>,
    pub transcripts: TranscriptHashes,
    pub schedule: Option<KeySchedule>,
    pub keys: MessageKeys,
    pub sk: Option<SessionKeyMaterial>,
}

#[derive(Debug, Clone)]
pub struct ResponderState {
    pub tid: Term,
    pub identity: String,
    pub pair: MethodPair,
    pub y: Term,
    pub c_r: Term,
    pub step: ResponderStep,
    pub m1: Message1,
    pub m2: Message2,
    pub peer: Option<String>,
    pub transcripts: TranscriptHashes,
    pub schedule: KeySchedule,
    pub keys: MessageKeys,
    pub exp_sk: Term,
    pub sk: Option<SessionKeyMaterial>,
}

impl InitiatorState {
    /// State after sending `m1` built from exponent `x`.
    pub fn resume(cfg: InitiatorConfig, tid: Term, x: Term, m1: Message1) -> InitiatorState {
        let suite = m1.suites_i.first().copied().unwrap_or(0);
        InitiatorState {
            tid,
            cfg,
            x,
            c_i: m1.c_i.clone(),
            step: InitiatorStep::SentM1,
            m1,
            peer: None,
            transcripts: TranscriptHashes::new(hash_alg(suite)),
            schedule: None,
            keys: MessageKeys::default(),
            sk: None,
        }
    }

    pub fn exporter(&self, label: &str) -> Option<Term> {
        let prk = self.schedule.as_ref()?.prk_4x3m.as_ref()?;
        Some(exporter(prk, self.transcripts.th_4.as_ref()?, label))
    }
}

impl ResponderState {
    pub fn exporter(&self, label: &str) -> Option<Term> {
        let prk = self.schedule.prk_4x3m.as_ref()?;
        Some(exporter(prk, self.transcripts.th_4.as_ref()?, label))
    }
}

/// Who a party is, as far as building authentication data goes.
#[derive(Debug, Clone)]
pub struct Persona {
    pub id: String,
    pub method: crate::roles::AuthMethod,
    pub cred: Term,
    pub ltk: Term,
}

impl Persona {
    pub fn lookup(reg: &Registry, id: &str, method: AuthMethod) -> Result<Persona, RoleError> {
        let (ltk, cred) = reg
            .long_term(id, method)
            .ok_or(RoleError::Unregistered(id.to_string(), method.label()))?;
        Ok(Persona { id: id.to_string(), method, cred: cred.clone(), ltk: ltk.clone() })
    }
}

fn ad_tuple(id: &Term, th: &Term, cred: &Term) -> Term {
    Term::tuple(vec![id.clone(), Term::tuple(vec![th.clone(), cred.clone()])])
}

fn mac(key: &Term, assoc: &Term, alg: &Term) -> Term {
    Term::aead_encrypt(key.clone(), Term::empty_str(), assoc.clone(), alg.clone())
}

fn auth_data(method: AuthMethod, assoc: Term, mac: Term, ltk: &Term) -> Term {
    match method {
        AuthMethod::Sig => Term::sign(Term::tuple(vec![assoc, mac]), ltk.clone()),
        _ => mac,
    }
}

fn verify_auth(method: AuthMethod, auth: &Term, assoc: Term, mac: Term, cred: &Term) -> bool {
    match method {
        AuthMethod::Sig => verify_signature(auth, &Term::tuple(vec![assoc, mac]), cred),
        _ => *auth == mac,
    }
}

/// Responder-side values fixed by message 2.
#[derive(Debug, Clone)]
pub struct Flight2 {
    pub m2: Message2,
    pub schedule: KeySchedule,
    pub keys: MessageKeys,
    pub th_2: Term,
    pub exp_sk: Term,
}

/// Build message 2. Used by honest responders and by the attacker's
/// synthesizer, which passes its own exponent and candidate secrets.
pub fn build_m2(
    m1: &Message1,
    suite: u8,
    responder: &Persona,
    psk: Option<&Term>,
    y: &Term,
    c_r: &Term,
) -> Flight2 {
    let pair = MethodPair { initiator: m1.method_i, responder: m1.method_r };
    let (alg, halg) = (aead_alg(suite), hash_alg(suite));
    let g_y = Term::exp(Term::g(), y.clone());
    let g_xy = Term::exp(m1.g_x.clone(), y.clone());
    let g_rx = pair.responder_stat().then(|| Term::exp(m1.g_x.clone(), responder.ltk.clone()));
    let seed = psk.cloned().unwrap_or_else(Term::empty_str);
    let schedule = KeySchedule::start(&seed, g_xy.clone(), g_rx.clone(), alg.clone(), halg.clone());
    let data_2 = Term::tuple(vec![m1.c_i.clone(), g_y.clone(), c_r.clone()]);
    let th_2 = compute_th2(&halg, m1, &data_2);
    let mut keys = MessageKeys::default();
    let ciphertext_2 = if pair.is_psk() {
        let k_2ae = schedule.key(&schedule.prk_2e, &th_2, "K_2ae");
        keys.k_2ae = Some(k_2ae.clone());
        Term::aead_encrypt(k_2ae, Term::empty_str(), th_2.clone(), alg.clone())
    } else {
        let k_2m = schedule.key(&schedule.prk_3e2m, &th_2, "K_2m");
        let id_cred = identity(&responder.id);
        let assoc = ad_tuple(&id_cred, &th_2, &responder.cred);
        let mac_2 = mac(&k_2m, &assoc, &alg);
        let auth = auth_data(responder.method, assoc, mac_2, &responder.ltk);
        keys.k_2e = Some(schedule.key(&schedule.prk_2e, &th_2, "K_2e"));
        keys.k_2m = Some(k_2m);
        let plain = [id_cred, auth];
        let mut slots = Vec::with_capacity(plain.len());
        for (i, p) in plain.into_iter().enumerate() {
            let ks = schedule.keystream(&th_2, i as u32 + 1);
            slots.push(Term::xor(p, ks.clone()));
            keys.k_2e_slots.push(ks);
        }
        Term::tuple(slots)
    };
    let exp_sk = SessionKeyMaterial::new(&g_xy, g_rx.as_ref(), None).exp_sk;
    let m2 = Message2 { c_i: m1.c_i.clone(), g_y, c_r: c_r.clone(), ciphertext_2 };
    Flight2 { m2, schedule, keys, th_2, exp_sk }
}

/// Build message 3 once the initiator's schedule is complete.
pub fn build_m3(
    schedule: &KeySchedule,
    th_3: &Term,
    initiator: Option<&Persona>,
    c_r: &Term,
) -> (Message3, MessageKeys) {
    let alg = &schedule.aead_alg;
    let prk_4x3m = schedule.prk_4x3m.as_ref().expect("schedule finished");
    let k_3ae = schedule.key(&schedule.prk_3e2m, th_3, "K_3ae");
    let mut keys = MessageKeys { k_3ae: Some(k_3ae.clone()), ..Default::default() };
    let plain = match initiator {
        Some(p) => {
            let k_3m = schedule.key(prk_4x3m, th_3, "K_3m");
            let id_cred = identity(&p.id);
            let assoc = ad_tuple(&id_cred, th_3, &p.cred);
            let mac_3 = mac(&k_3m, &assoc, alg);
            keys.k_3m = Some(k_3m);
            Term::tuple(vec![id_cred, auth_data(p.method, assoc, mac_3, &p.ltk)])
        }
        None => Term::empty_str(),
    };
    let ciphertext_3 = Term::aead_encrypt(k_3ae, plain, th_3.clone(), alg.clone());
    (Message3 { c_r: c_r.clone(), ciphertext_3 }, keys)
}

fn hex_msg(m: Message) -> String {
    hex::encode(encode(&m))
}

pub fn i1(
    cfg: &InitiatorConfig,
    tid: Term,
    reg: &Registry,
    fresh: &mut Fresh,
) -> Result<(InitiatorState, Message1, Vec<Event>), RoleError> {
    let pair = cfg.pair;
    let id_psk = if pair.is_psk() {
        let (_, id) = reg.psk(&cfg.identity, &cfg.intended_peer).ok_or(RoleError::MissingPsk)?;
        Some(id.clone())
    } else {
        Persona::lookup(reg, &cfg.identity, pair.initiator)?;
        None
    };
    let x = fresh.name("x");
    let c_i = Term::public(&format!("cI{}", fresh.serial()));
    let m1 = Message1 {
        method_i: pair.initiator,
        method_r: pair.responder,
        suites_i: cfg.suites.clone(),
        g_x: Term::exp(Term::g(), x.clone()),
        c_i: c_i.clone(),
        id_psk,
        ad_1: None,
    };
    let events = vec![Event::I1 {
        tid: tid.clone(),
        u: identity(&cfg.identity),
        intended: identity(&cfg.intended_peer),
        method: pair,
    }];
    let st = InitiatorState::resume(cfg.clone(), tid, x, m1.clone());
    Ok((st, m1, events))
}

/// Suite negotiation as the responder sees it.
pub fn select_suite(suites_i: &[u8], supported: &BTreeSet<u8>) -> Result<u8, Rejection> {
    let head = *suites_i.first().ok_or(Rejection::Final)?;
    if supported.contains(&head) {
        return Ok(head);
    }
    match suites_i[1..].iter().find(|s| supported.contains(s)) {
        Some(&c) => Err(Rejection::Counter(c)),
        None => Err(Rejection::Final),
    }
}

pub fn r2(
    cfg: &ResponderConfig,
    tid: Term,
    m1: &Message1,
    reg: &Registry,
    fresh: &mut Fresh,
) -> Result<(ResponderState, Message2, Vec<Event>), RoleError> {
    m1.check().map_err(|_| RoleError::Malformed)?;
    let pair = m1.pair().ok_or(RoleError::Malformed)?;
    if !cfg.accepted_pairs.contains(&pair) {
        return Err(RoleError::Rejected(Rejection::Final));
    }
    let suite = select_suite(&m1.suites_i, &cfg.supported_suites).map_err(RoleError::Rejected)?;
    let (me, psk, peer) = if pair.is_psk() {
        let id_psk = m1.id_psk.as_ref().ok_or(RoleError::Malformed)?;
        let (u, v, psk) = reg.psk_by_id(id_psk).ok_or(RoleError::UnknownCredential)?;
        if v != cfg.identity {
            return Err(RoleError::UnknownCredential);
        }
        let me = Persona {
            id: cfg.identity.clone(),
            method: AuthMethod::Psk,
            cred: id_psk.clone(),
            ltk: psk.clone(),
        };
        (me, Some(psk.clone()), Some(u.to_string()))
    } else {
        (Persona::lookup(reg, &cfg.identity, pair.responder)?, None, None)
    };
    let y = fresh.name("y");
    let c_r = Term::public(&format!("cR{}", fresh.serial()));
    let f = build_m2(m1, suite, &me, psk.as_ref(), &y, &c_r);
    let mut transcripts = TranscriptHashes::new(hash_alg(suite));
    transcripts.th_2 = Some(f.th_2.clone());
    let v = identity(&cfg.identity);
    let events = vec![
        Event::ExpRunningR { tid: tid.clone(), v: v.clone(), sk: f.exp_sk.clone() },
        Event::R2 {
            tid: tid.clone(),
            v,
            m1: hex_msg(Message::M1(m1.clone())),
            m2: hex_msg(Message::M2(f.m2.clone())),
        },
    ];
    let st = ResponderState {
        tid,
        identity: cfg.identity.clone(),
        pair,
        y,
        c_r,
        step: ResponderStep::SentM2,
        m1: m1.clone(),
        m2: f.m2.clone(),
        peer,
        transcripts,
        schedule: f.schedule,
        keys: f.keys,
        exp_sk: f.exp_sk,
        sk: None,
    };
    Ok((st, f.m2, events))
}

impl InitiatorState {
    /// Process message 2; on error the session is aborted.
    pub fn i3(&mut self, m2: &Message2, reg: &Registry) -> Result<(Message3, Vec<Event>), RoleError> {
        let r = self.i3_inner(m2, reg);
        if r.is_err() && self.step == InitiatorStep::SentM1 {
            self.step = InitiatorStep::Aborted;
        }
        r
    }

    /// A rejection from the responder ends this run.
    pub fn rejected(&mut self, _why: Rejection) {
        if self.step == InitiatorStep::SentM1 {
            self.step = InitiatorStep::Aborted;
        }
    }

    fn i3_inner(&mut self, m2: &Message2, reg: &Registry) -> Result<(Message3, Vec<Event>), RoleError> {
        if self.step != InitiatorStep::SentM1 {
            return Err(RoleError::OutOfOrder);
        }
        if m2.c_i != self.c_i {
            return Err(RoleError::WrongConnection);
        }
        let pair = self.cfg.pair;
        let suite = self.m1.suites_i[0];
        let (alg, halg) = (aead_alg(suite), hash_alg(suite));
        let g_xy = Term::exp(m2.g_y.clone(), self.x.clone());
        let th_2 = compute_th2(&halg, &self.m1, &m2.data_2());
        let mut keys = MessageKeys::default();
        let (schedule, peer) = if pair.is_psk() {
            let (psk, _) = reg
                .psk(&self.cfg.identity, &self.cfg.intended_peer)
                .ok_or(RoleError::MissingPsk)?;
            let ks = KeySchedule::start(psk, g_xy.clone(), None, alg.clone(), halg);
            let k_2ae = ks.key(&ks.prk_2e, &th_2, "K_2ae");
            aead_decrypt(&k_2ae, &m2.ciphertext_2, &th_2, &alg).map_err(|_| RoleError::AuthFailure)?;
            keys.k_2ae = Some(k_2ae);
            (ks, self.cfg.intended_peer.clone())
        } else {
            let slots = m2.ciphertext_2.as_tuple().ok_or(RoleError::Malformed)?;
            if slots.len() != 2 {
                return Err(RoleError::Malformed);
            }
            let probe = KeySchedule::start(&Term::empty_str(), g_xy.clone(), None, alg.clone(), halg.clone());
            let ks1 = probe.keystream(&th_2, 1);
            let ks2 = probe.keystream(&th_2, 2);
            let id_cred = Term::xor(slots[0].clone(), ks1.clone());
            let auth = Term::xor(slots[1].clone(), ks2.clone());
            let Term::Public(v) = &id_cred else {
                return Err(RoleError::UnknownCredential);
            };
            let cred = reg
                .long_term(v, pair.responder)
                .map(|(_, c)| c.clone())
                .ok_or(RoleError::UnknownCredential)?;
            if self.cfg.mitigation && *v != self.cfg.intended_peer {
                return Err(RoleError::UnintendedPeer);
            }
            let g_rx = pair.responder_stat().then(|| Term::exp(cred.clone(), self.x.clone()));
            let ks = KeySchedule::start(&Term::empty_str(), g_xy.clone(), g_rx, alg.clone(), halg);
            let k_2m = ks.key(&ks.prk_3e2m, &th_2, "K_2m");
            let assoc = ad_tuple(&id_cred, &th_2, &cred);
            let mac_2 = mac(&k_2m, &assoc, &alg);
            if !verify_auth(pair.responder, &auth, assoc, mac_2, &cred) {
                return Err(RoleError::AuthFailure);
            }
            keys.k_2e = Some(ks.key(&ks.prk_2e, &th_2, "K_2e"));
            keys.k_2e_slots = vec![ks1, ks2];
            keys.k_2m = Some(k_2m);
            (ks, v.clone())
        };
        let mut schedule = schedule;
        let th_3 = compute_th3(&th_2, &m2.ciphertext_2, &m2.c_r);
        let me = if pair.is_psk() {
            None
        } else {
            Some(Persona::lookup(reg, &self.cfg.identity, pair.initiator)?)
        };
        let g_iy = pair
            .initiator_stat()
            .then(|| Term::exp(m2.g_y.clone(), me.as_ref().unwrap().ltk.clone()));
        schedule.finish(g_iy.clone());
        let (m3, k3) = build_m3(&schedule, &th_3, me.as_ref(), &m2.c_r);
        keys.k_3ae = k3.k_3ae;
        keys.k_3m = k3.k_3m;
        let th_4 = compute_th4(&th_3, &m3.ciphertext_3);
        let sk = SessionKeyMaterial::new(&g_xy, schedule.g_rx.as_ref(), g_iy.as_ref());
        self.transcripts.th_2 = Some(th_2);
        self.transcripts.th_3 = Some(th_3);
        self.transcripts.th_4 = Some(th_4);
        let (u, v) = (identity(&self.cfg.identity), identity(&peer));
        let tid = self.tid.clone();
        let events = vec![
            Event::I3 { tid: tid.clone() },
            Event::RunningI { tid: tid.clone(), u: u.clone(), v: v.clone(), sk: sk.imp_sk.clone() },
            Event::ExpCommitI { tid: tid.clone(), u: u.clone(), v: v.clone(), sk: sk.exp_sk.clone() },
            Event::CommitI {
                tid,
                u,
                v,
                sk: sk.imp_sk.clone(),
                intended: identity(&self.cfg.intended_peer),
            },
        ];
        self.schedule = Some(schedule);
        self.keys = keys;
        self.peer = Some(peer);
        self.sk = Some(sk);
        self.step = InitiatorStep::Done;
        Ok((m3, events))
    }
}

impl ResponderState {
    /// Process message 3; on error the session is aborted.
    pub fn r4(&mut self, m3: &Message3, reg: &Registry) -> Result<Vec<Event>, RoleError> {
        let r = self.r4_inner(m3, reg);
        if r.is_err() && self.step == ResponderStep::SentM2 {
            self.step = ResponderStep::Aborted;
        }
        r
    }

    fn r4_inner(&mut self, m3: &Message3, reg: &Registry) -> Result<Vec<Event>, RoleError> {
        if self.step != ResponderStep::SentM2 {
            return Err(RoleError::OutOfOrder);
        }
        if m3.c_r != self.c_r {
            return Err(RoleError::WrongConnection);
        }
        let alg = self.schedule.aead_alg.clone();
        let th_2 = self.transcripts.th_2.clone().unwrap();
        let th_3 = compute_th3(&th_2, &self.m2.ciphertext_2, &self.c_r);
        let k_3ae = self.schedule.key(&self.schedule.prk_3e2m, &th_3, "K_3ae");
        let plain = aead_decrypt(&k_3ae, &m3.ciphertext_3, &th_3, &alg)
            .map_err(|_| RoleError::AuthFailure)?;
        let mut schedule = self.schedule.clone();
        let peer = if self.pair.is_psk() {
            schedule.finish(None);
            self.peer.clone().unwrap()
        } else {
            let parts = plain.as_tuple().ok_or(RoleError::Malformed)?;
            if parts.len() != 2 {
                return Err(RoleError::Malformed);
            }
            let Term::Public(u) = &parts[0] else {
                return Err(RoleError::UnknownCredential);
            };
            let cred = reg
                .long_term(u, self.pair.initiator)
                .map(|(_, c)| c.clone())
                .ok_or(RoleError::UnknownCredential)?;
            let g_iy = self.pair.initiator_stat().then(|| Term::exp(cred.clone(), self.y.clone()));
            let prk_4x3m = schedule.finish(g_iy);
            let k_3m = schedule.key(&prk_4x3m, &th_3, "K_3m");
            let assoc = ad_tuple(&parts[0], &th_3, &cred);
            let mac_3 = mac(&k_3m, &assoc, &alg);
            if !verify_auth(self.pair.initiator, &parts[1], assoc, mac_3, &cred) {
                return Err(RoleError::AuthFailure);
            }
            self.keys.k_3m = Some(k_3m);
            u.clone()
        };
        self.keys.k_3ae = Some(k_3ae);
        let th_4 = compute_th4(&th_3, &m3.ciphertext_3);
        let sk = SessionKeyMaterial::new(&schedule.g_xy, schedule.g_rx.as_ref(), schedule.g_iy.as_ref());
        self.transcripts.th_3 = Some(th_3);
        self.transcripts.th_4 = Some(th_4);
        let events = vec![
            Event::R4 { tid: self.tid.clone() },
            Event::CommitR {
                tid: self.tid.clone(),
                u: identity(&peer),
                v: identity(&self.identity),
                sk: sk.imp_sk.clone(),
            },
        ];
        self.schedule = schedule;
        self.peer = Some(peer);
        self.sk = Some(sk);
        self.step = ResponderStep::Done;
        Ok(events)
    }
}

/// What the initiator remembers about responders' suite preferences.
#[derive(Debug, Clone, Default)]
pub struct SuiteCache {
    pub retain_across_meta_sessions: bool,
    meta: u64,
    learned: BTreeMap<(String, u64), Learned>,
}

#[derive(Debug, Clone, Default)]
struct Learned {
    rejected: BTreeSet<u8>,
    counter: Option<u8>,
}

impl SuiteCache {
    pub fn new(retain_across_meta_sessions: bool) -> SuiteCache {
        SuiteCache { retain_across_meta_sessions, ..Default::default() }
    }

    fn begin_meta(&mut self) {
        self.meta += 1;
        if self.retain_across_meta_sessions {
            let carried: Vec<_> = self
                .learned
                .iter()
                .filter(|((_, m), _)| *m == self.meta - 1)
                .map(|((r, _), l)| ((r.clone(), self.meta), l.clone()))
                .collect();
            self.learned.extend(carried);
        }
    }

    fn entry(&mut self, responder: &str) -> &mut Learned {
        self.learned.entry((responder.to_string(), self.meta)).or_default()
    }

    fn proposal(&mut self, responder: &str, preferred: &[u8]) -> Vec<u8> {
        let l = self.entry(responder);
        let mut list: Vec<u8> = preferred.iter().copied().filter(|s| !l.rejected.contains(s)).collect();
        if let Some(c) = l.counter {
            if let Some(pos) = list.iter().position(|&s| s == c) {
                list.remove(pos);
                list.insert(0, c);
            }
        }
        list
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunRecord {
    pub suites: Vec<u8>,
    pub outcome: String,
}

#[derive(Debug, Clone)]
pub struct MetaOutcome {
    pub runs: Vec<RunRecord>,
    pub suite: u8,
    pub initiator: InitiatorState,
    pub responder: ResponderState,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("negotiation failed after {} run(s)", runs.len())]
pub struct NegotiationFailed {
    pub runs: Vec<RunRecord>,
}

const MAX_RUNS: usize = 8;

/// Drive EDHOC runs until a suite is agreed or the options are exhausted.
pub fn negotiate_meta(
    cfg: &InitiatorConfig,
    responder: &ResponderConfig,
    reg: &Registry,
    fresh: &mut Fresh,
    cache: &mut SuiteCache,
) -> Result<MetaOutcome, NegotiationFailed> {
    cache.begin_meta();
    let mut runs = Vec::new();
    while runs.len() < MAX_RUNS {
        let suites = cache.proposal(&responder.identity, &cfg.suites);
        if suites.is_empty() {
            break;
        }
        let run_cfg = InitiatorConfig { suites: suites.clone(), ..cfg.clone() };
        let tid = fresh.name("tid");
        let Ok((mut ist, m1, _)) = i1(&run_cfg, tid, reg, fresh) else {
            runs.push(RunRecord { suites, outcome: "initiator-error".into() });
            break;
        };
        let rtid = fresh.name("tid");
        match r2(responder, rtid, &m1, reg, fresh) {
            Ok((mut rst, m2, _)) => {
                let outcome = ist
                    .i3(&m2, reg)
                    .and_then(|(m3, _)| rst.r4(&m3, reg));
                let ok = outcome.is_ok();
                runs.push(RunRecord {
                    suites: suites.clone(),
                    outcome: match outcome {
                        Ok(_) => format!("accepted({})", suites[0]),
                        Err(e) => e.code().to_string(),
                    },
                });
                if !ok {
                    break;
                }
                return Ok(MetaOutcome { runs, suite: suites[0], initiator: ist, responder: rst });
            }
            Err(RoleError::Rejected(Rejection::Counter(c))) => {
                ist.rejected(Rejection::Counter(c));
                let l = cache.entry(&responder.identity);
                l.rejected.insert(suites[0]);
                l.counter = Some(c);
                runs.push(RunRecord { suites, outcome: format!("counter({c})") });
            }
            Err(e) => {
                ist.rejected(Rejection::Final);
                runs.push(RunRecord { suites, outcome: e.code().to_string() });
                break;
            }
        }
    }
    Err(NegotiationFailed { runs })
}
