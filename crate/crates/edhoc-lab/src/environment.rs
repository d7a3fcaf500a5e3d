//! The world: credential registry, attacker-controlled network, reveal
//! actions, schedules, traces and randomized exploration.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacker::{attacker_fresh, synthesize, KnowledgeBase, Pattern, DEFAULT_DEPTH};
use crate::roles::{
    i1, identity, r2, AuthMethod, InitiatorConfig, InitiatorState, InitiatorStep, MethodPair,
    ResponderConfig, ResponderState, ResponderStep, RoleError,
};
use crate::term::{Fresh, Term};
use crate::wire::{decode, encode, DecodeError, Message, Message1};

pub const SEED_ENV: &str = "EDHOC_LAB_SEED";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("{0} already has a {1} key")]
    Duplicate(String, &'static str),
    #[error("PSK is registered per pair")]
    PskNeedsPair,
}

/// Long-term credentials. One key per (identity, kind).
#[derive(Debug, Clone, Default)]
pub struct Registry {
    keys: BTreeMap<(String, AuthMethod), (Term, Term)>,
    psks: BTreeMap<(String, String), (Term, Term)>,
}

impl Registry {
    /// Returns the public credential: `pk(ltk)` for SIG, `g^ltk` for STAT.
    pub fn register(&mut self, id: &str, kind: AuthMethod, fresh: &mut Fresh) -> Result<Term, RegistryError> {
        if kind == AuthMethod::Psk {
            return Err(RegistryError::PskNeedsPair);
        }
        let slot = (id.to_string(), kind);
        if self.keys.contains_key(&slot) {
            return Err(RegistryError::Duplicate(id.to_string(), kind.label()));
        }
        let ltk = fresh.name("ltk");
        let cred = match kind {
            AuthMethod::Sig => Term::pk(ltk.clone()),
            _ => Term::exp(Term::g(), ltk.clone()),
        };
        self.keys.insert(slot, (ltk, cred.clone()));
        Ok(cred)
    }

    /// Ordered pair: `u` initiates, `v` responds. Returns the PSK identifier.
    pub fn register_psk(&mut self, u: &str, v: &str, fresh: &mut Fresh) -> Result<Term, RegistryError> {
        let slot = (u.to_string(), v.to_string());
        if self.psks.contains_key(&slot) {
            return Err(RegistryError::Duplicate(format!("{u},{v}"), "PSK"));
        }
        let psk = fresh.name("psk");
        let id = Term::public(&format!("idpsk_{u}_{v}"));
        self.psks.insert(slot, (psk, id.clone()));
        Ok(id)
    }

    /// `(ltk, credential)`.
    pub fn long_term(&self, id: &str, kind: AuthMethod) -> Option<(&Term, &Term)> {
        self.keys.get(&(id.to_string(), kind)).map(|(a, b)| (a, b))
    }

    /// `(psk, id_psk)`.
    pub fn psk(&self, u: &str, v: &str) -> Option<(&Term, &Term)> {
        self.psks.get(&(u.to_string(), v.to_string())).map(|(a, b)| (a, b))
    }

    pub fn psk_by_id(&self, id: &Term) -> Option<(&str, &str, &Term)> {
        self.psks
            .iter()
            .find(|(_, (_, i))| i == id)
            .map(|((u, v), (psk, _))| (u.as_str(), v.as_str(), psk))
    }

    pub fn identities(&self) -> BTreeSet<String> {
        let mut ids: BTreeSet<String> = self.keys.keys().map(|(i, _)| i.clone()).collect();
        for (u, v) in self.psks.keys() {
            ids.insert(u.clone());
            ids.insert(v.clone());
        }
        ids
    }
}

/// Action facts and bookkeeping events. Terms appear in canonical text,
/// message bytes in hex.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Event {
    I1 { tid: Term, u: Term, intended: Term, method: MethodPair },
    R2 { tid: Term, v: Term, m1: String, m2: String },
    I3 { tid: Term },
    R4 { tid: Term },
    RunningI { tid: Term, u: Term, v: Term, sk: Term },
    ExpRunningR { tid: Term, v: Term, sk: Term },
    CommitI { tid: Term, u: Term, v: Term, sk: Term, intended: Term },
    ExpCommitI { tid: Term, u: Term, v: Term, sk: Term },
    CommitR { tid: Term, u: Term, v: Term, sk: Term },
    #[serde(rename = "LTKRev")]
    LtkRev { who: Term },
    #[serde(rename = "SKRev")]
    SkRev { tid: Term, sk: Term },
    AttackerKnows {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        term: Option<Term>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        msg: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bytes: Option<String>,
    },
    Delivered { msg: usize, to: Term },
    Dropped { msg: usize },
    Injected { to: Term, bytes: String },
    Abort { tid: Term, reason: String },
    Rejected { tid: Term, reason: String },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::I1 { .. } => "I1",
            Event::R2 { .. } => "R2",
            Event::I3 { .. } => "I3",
            Event::R4 { .. } => "R4",
            Event::RunningI { .. } => "RunningI",
            Event::ExpRunningR { .. } => "ExpRunningR",
            Event::CommitI { .. } => "CommitI",
            Event::ExpCommitI { .. } => "ExpCommitI",
            Event::CommitR { .. } => "CommitR",
            Event::LtkRev { .. } => "LTKRev",
            Event::SkRev { .. } => "SKRev",
            Event::AttackerKnows { .. } => "AttackerKnows",
            Event::Delivered { .. } => "Delivered",
            Event::Dropped { .. } => "Dropped",
            Event::Injected { .. } => "Injected",
            Event::Abort { .. } => "Abort",
            Event::Rejected { .. } => "Rejected",
        }
    }

    /// Terms this event hands to the attacker, if any.
    pub fn attacker_terms(&self) -> Vec<Term> {
        match self {
            Event::AttackerKnows { term: Some(t), .. } => vec![t.clone()],
            Event::AttackerKnows { bytes: Some(b), .. } => hex::decode(b)
                .ok()
                .and_then(|b| decode(&b).ok())
                .map(|m| m.terms())
                .unwrap_or_default(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub i: usize,
    #[serde(flatten)]
    pub event: Event,
}

pub type Trace = Vec<TraceEvent>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Action {
    Seed { seed: u64 },
    Register { id: String, method: AuthMethod },
    RegisterPsk { u: String, v: String },
    NewSession { initiator: InitiatorConfig, responder: ResponderConfig },
    Deliver { msg: usize },
    Drop { msg: usize },
    Inject {
        to: Term,
        bytes: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        via: Vec<Term>,
    },
    #[serde(rename = "RevealLTK")]
    RevealLtk { id: String },
    #[serde(rename = "RevealPSK")]
    RevealPsk { u: String, v: String },
    #[serde(rename = "RevealSK")]
    RevealSk { tid: Term },
    DeduceAndRecord { term: Term },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleStep {
    pub i: usize,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("line {0}: {1}")]
    Parse(usize, serde_json::Error),
}

pub fn to_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(&it).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, JsonlError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| JsonlError::Parse(n + 1, e)))
        .collect()
}

pub fn trace_to_jsonl(trace: &[TraceEvent]) -> String {
    to_jsonl(trace)
}

pub fn trace_from_jsonl(text: &str) -> Result<Trace, JsonlError> {
    from_jsonl(text)
}

pub fn schedule_to_jsonl(actions: &[Action]) -> String {
    to_jsonl(actions.iter().enumerate().map(|(i, a)| ScheduleStep { i, action: a.clone() }))
}

pub fn schedule_from_jsonl(text: &str) -> Result<Vec<Action>, JsonlError> {
    Ok(from_jsonl::<ScheduleStep>(text)?.into_iter().map(|s| s.action).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("cannot start session: {0}")]
    Role(RoleError),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("unknown identity {0}")]
    UnknownIdentity(String),
    #[error("message {0} does not exist")]
    UnknownMessage(usize),
    #[error("message {0} was already delivered or dropped")]
    Consumed(usize),
    #[error("injected bytes do not decode: {0}")]
    Decode(DecodeError),
    #[error("bad hex in injection")]
    Hex,
    #[error("injection is not derivable from attacker knowledge: {0}")]
    Underivable(String),
    #[error("session {0} has not committed")]
    NotCommitted(String),
}

fn short(t: &Term) -> String {
    let s = t.to_string();
    match s.char_indices().nth(96) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s,
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Role {
    Initiator(InitiatorState),
    Responder { cfg: ResponderConfig, state: Option<ResponderState>, rejected: bool },
}

#[derive(Debug, Clone)]
pub struct Session {
    pub tid: Term,
    pub peer_tid: Term,
    pub role: Role,
}

impl Session {
    /// Committed session key material, if this side finished.
    pub fn imp_sk(&self) -> Option<&Term> {
        match &self.role {
            Role::Initiator(s) => s.sk.as_ref().map(|k| &k.imp_sk),
            Role::Responder { state: Some(s), .. } => s.sk.as_ref().map(|k| &k.imp_sk),
            _ => None,
        }
    }

    pub fn exp_sk(&self) -> Option<&Term> {
        match &self.role {
            Role::Initiator(s) => s.sk.as_ref().map(|k| &k.exp_sk),
            Role::Responder { state: Some(s), .. } => s.sk.as_ref().map(|k| &k.exp_sk),
            _ => None,
        }
    }

    pub fn awaiting_m1(&self) -> bool {
        matches!(&self.role, Role::Responder { state: None, rejected: false, .. })
    }

    pub fn awaiting_m2(&self) -> bool {
        matches!(&self.role, Role::Initiator(s) if s.step == InitiatorStep::SentM1)
    }

    pub fn awaiting_m3(&self) -> bool {
        matches!(&self.role, Role::Responder { state: Some(s), .. } if s.step == ResponderStep::SentM2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketState {
    Pending,
    Delivered,
    Dropped,
}

#[derive(Debug, Clone)]
pub struct Packet {
    pub bytes: Vec<u8>,
    pub from: Term,
    pub to: Term,
    pub state: PacketState,
}

/// One simulation run. Every successful `apply` is appended to `schedule`,
/// so replaying `schedule` on a new world reproduces `trace` exactly.
#[derive(Debug, Clone)]
pub struct World {
    pub registry: Registry,
    pub fresh: Fresh,
    pub kb: KnowledgeBase,
    pub trace: Trace,
    pub sessions: Vec<Session>,
    pub network: Vec<Packet>,
    pub schedule: Vec<Action>,
}

impl Default for World {
    fn default() -> Self {
        World::new(DEFAULT_DEPTH)
    }
}

impl World {
    pub fn new(depth: usize) -> World {
        World {
            registry: Registry::default(),
            fresh: Fresh::default(),
            kb: KnowledgeBase::new(depth),
            trace: Vec::new(),
            sessions: Vec::new(),
            network: Vec::new(),
            schedule: Vec::new(),
        }
    }

    pub fn replay(actions: &[Action], depth: usize) -> Result<World, (usize, EnvError)> {
        let mut w = World::new(depth);
        for (i, a) in actions.iter().enumerate() {
            w.apply(a.clone()).map_err(|e| (i, e))?;
        }
        Ok(w)
    }

    fn emit(&mut self, e: Event) {
        let i = self.trace.len();
        self.trace.push(TraceEvent { i, event: e });
    }

    fn learn(&mut self, t: Term) {
        self.kb.observe(t.clone());
        self.emit(Event::AttackerKnows { term: Some(t), msg: None, bytes: None });
    }

    pub fn session(&self, tid: &Term) -> Option<&Session> {
        self.sessions.iter().find(|s| s.tid == *tid)
    }

    fn session_index(&self, tid: &Term) -> Result<usize, EnvError> {
        self.sessions
            .iter()
            .position(|s| s.tid == *tid)
            .ok_or_else(|| EnvError::UnknownSession(tid.to_string()))
    }

    pub fn apply(&mut self, action: Action) -> Result<(), EnvError> {
        self.apply_inner(&action)?;
        self.schedule.push(action);
        Ok(())
    }

    fn apply_inner(&mut self, action: &Action) -> Result<(), EnvError> {
        match action {
            Action::Seed { .. } => {}
            Action::Register { id, method } => {
                let cred = self.registry.register(id, *method, &mut self.fresh)?;
                self.learn(cred);
            }
            Action::RegisterPsk { u, v } => {
                let id = self.registry.register_psk(u, v, &mut self.fresh)?;
                self.learn(id);
            }
            Action::NewSession { initiator, responder } => {
                let tid_i = self.fresh.name("tid");
                let (st, m1, events) = i1(initiator, tid_i.clone(), &self.registry, &mut self.fresh)
                    .map_err(EnvError::Role)?;
                let tid_r = self.fresh.name("tid");
                self.sessions.push(Session {
                    tid: tid_i.clone(),
                    peer_tid: tid_r.clone(),
                    role: Role::Initiator(st),
                });
                self.sessions.push(Session {
                    tid: tid_r.clone(),
                    peer_tid: tid_i.clone(),
                    role: Role::Responder { cfg: responder.clone(), state: None, rejected: false },
                });
                for e in events {
                    self.emit(e);
                }
                self.send(Message::M1(m1), tid_i, tid_r);
            }
            Action::Deliver { msg } => {
                let p = self.network.get(*msg).ok_or(EnvError::UnknownMessage(*msg))?;
                if p.state != PacketState::Pending {
                    return Err(EnvError::Consumed(*msg));
                }
                let (to, bytes) = (p.to.clone(), p.bytes.clone());
                self.network[*msg].state = PacketState::Delivered;
                self.emit(Event::Delivered { msg: *msg, to: to.clone() });
                let m = decode(&bytes).expect("honest messages decode");
                self.receive(&to, m);
            }
            Action::Drop { msg } => {
                let p = self.network.get(*msg).ok_or(EnvError::UnknownMessage(*msg))?;
                if p.state != PacketState::Pending {
                    return Err(EnvError::Consumed(*msg));
                }
                self.network[*msg].state = PacketState::Dropped;
                self.emit(Event::Dropped { msg: *msg });
            }
            Action::Inject { to, bytes, via } => {
                self.session_index(to)?;
                let raw = hex::decode(bytes).map_err(|_| EnvError::Hex)?;
                let m = decode(&raw).map_err(EnvError::Decode)?;
                let mut kb = self.kb.clone();
                for t in via {
                    if !kb.can_derive(t) {
                        return Err(EnvError::Underivable(short(t)));
                    }
                    kb.observe(t.clone());
                }
                if let Some(t) = m.terms().into_iter().find(|t| !kb.can_derive(t)) {
                    return Err(EnvError::Underivable(short(&t)));
                }
                for t in via {
                    self.learn(t.clone());
                }
                self.emit(Event::Injected { to: to.clone(), bytes: bytes.clone() });
                self.receive(to, m);
            }
            Action::RevealLtk { id } => {
                let ltks: Vec<Term> = [AuthMethod::Sig, AuthMethod::Stat]
                    .into_iter()
                    .filter_map(|k| self.registry.long_term(id, k).map(|(l, _)| l.clone()))
                    .collect();
                if ltks.is_empty() {
                    return Err(EnvError::UnknownIdentity(id.clone()));
                }
                self.emit(Event::LtkRev { who: identity(id) });
                for l in ltks {
                    self.learn(l);
                }
            }
            Action::RevealPsk { u, v } => {
                let (psk, _) = self
                    .registry
                    .psk(u, v)
                    .ok_or_else(|| EnvError::UnknownIdentity(format!("{u},{v}")))?;
                let psk = psk.clone();
                self.emit(Event::LtkRev { who: Term::tuple(vec![identity(u), identity(v)]) });
                self.learn(psk);
            }
            Action::RevealSk { tid } => {
                let s = &self.sessions[self.session_index(tid)?];
                let sk = s.imp_sk().cloned().ok_or_else(|| EnvError::NotCommitted(tid.to_string()))?;
                self.emit(Event::SkRev { tid: tid.clone(), sk: sk.clone() });
                self.learn(sk);
            }
            Action::DeduceAndRecord { term } => {
                if self.kb.can_derive(term) {
                    self.learn(term.clone());
                }
            }
        }
        Ok(())
    }

    fn send(&mut self, m: Message, from: Term, to: Term) {
        let bytes = encode(&m);
        let idx = self.network.len();
        for t in m.terms() {
            self.kb.observe(t);
        }
        self.emit(Event::AttackerKnows { term: None, msg: Some(idx), bytes: Some(hex::encode(&bytes)) });
        self.network.push(Packet { bytes, from, to, state: PacketState::Pending });
    }

    /// Hand a message to a session. Messages a session is not waiting
    /// for are ignored.
    fn receive(&mut self, to: &Term, m: Message) {
        let Ok(idx) = self.session_index(to) else { return };
        let peer = self.sessions[idx].peer_tid.clone();
        let tid = to.clone();
        let reg = &self.registry;
        let (events, reply) = match (&mut self.sessions[idx].role, m) {
            (Role::Responder { cfg, state: state @ None, rejected: rejected @ false }, Message::M1(m1)) => {
                match r2(cfg, tid.clone(), &m1, reg, &mut self.fresh) {
                    Ok((st, m2, ev)) => {
                        *state = Some(st);
                        (ev, Some(Message::M2(m2)))
                    }
                    Err(RoleError::Rejected(_)) => {
                        *rejected = true;
                        (vec![Event::Rejected { tid, reason: "suite".into() }], None)
                    }
                    Err(e) => {
                        *rejected = true;
                        (vec![Event::Abort { tid, reason: e.code().into() }], None)
                    }
                }
            }
            (Role::Initiator(st), Message::M2(m2)) if st.step == InitiatorStep::SentM1 => {
                match st.i3(&m2, reg) {
                    Ok((m3, ev)) => (ev, Some(Message::M3(m3))),
                    Err(e) => (vec![Event::Abort { tid, reason: e.code().into() }], None),
                }
            }
            (Role::Responder { state: Some(st), .. }, Message::M3(m3)) if st.step == ResponderStep::SentM2 => {
                match st.r4(&m3, reg) {
                    Ok(ev) => (ev, None),
                    Err(e) => (vec![Event::Abort { tid, reason: e.code().into() }], None),
                }
            }
            _ => (Vec::new(), None),
        };
        for e in events {
            self.emit(e);
        }
        if let Some(r) = reply {
            self.send(r, to.clone(), peer);
        }
    }

    pub fn pending(&self) -> Vec<usize> {
        (0..self.network.len())
            .filter(|&i| self.network[i].state == PacketState::Pending)
            .collect()
    }

    pub fn message(&self, idx: usize) -> Option<Message> {
        self.network.get(idx).and_then(|p| decode(&p.bytes).ok())
    }

    /// Record the attacker's attempt to deduce every committed key.
    pub fn deduce_committed(&mut self) {
        let mut sks: Vec<Term> = Vec::new();
        for s in &self.sessions {
            for t in [s.imp_sk(), s.exp_sk()].into_iter().flatten() {
                if !sks.contains(t) {
                    sks.push(t.clone());
                }
            }
        }
        for term in sks {
            self.apply(Action::DeduceAndRecord { term }).expect("deduction never fails");
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Bounds {
    pub max_sessions: usize,
    pub max_steps: usize,
    pub depth: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { max_sessions: 3, max_steps: 40, depth: DEFAULT_DEPTH }
    }
}

#[derive(Debug, Clone)]
pub struct Explored {
    pub seed: u64,
    pub pair: MethodPair,
    pub schedule: Vec<Action>,
    pub trace: Trace,
}

pub const IDENTITIES: [&str; 3] = ["A", "B", "C"];

/// Registration actions giving every identity what `pair` needs.
pub fn setup_actions(pair: MethodPair, ids: &[&str]) -> Vec<Action> {
    let mut out = Vec::new();
    if pair.is_psk() {
        for u in ids {
            for v in ids {
                if u != v {
                    out.push(Action::RegisterPsk { u: u.to_string(), v: v.to_string() });
                }
            }
        }
        return out;
    }
    let kinds: BTreeSet<AuthMethod> = [pair.initiator, pair.responder].into();
    for id in ids {
        for k in &kinds {
            out.push(Action::Register { id: id.to_string(), method: *k });
        }
    }
    out
}

pub fn session_action(pair: MethodPair, u: &str, v: &str, mitigation: bool) -> Action {
    Action::NewSession {
        initiator: InitiatorConfig {
            identity: u.into(),
            intended_peer: v.into(),
            pair,
            suites: vec![0],
            mitigation,
        },
        responder: ResponderConfig {
            identity: v.into(),
            supported_suites: [0].into(),
            accepted_pairs: vec![pair],
        },
    }
}

fn pair_salt(pair: MethodPair) -> u64 {
    MethodPair::ALL.iter().position(|p| *p == pair).unwrap() as u64
}

pub fn explore_one(pair: MethodPair, seed: u64, bounds: Bounds) -> Explored {
    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_mul(8).wrapping_add(pair_salt(pair)));
    let mut w = World::new(bounds.depth);
    w.apply(Action::Seed { seed }).unwrap();
    for a in setup_actions(pair, &IDENTITIES) {
        w.apply(a).unwrap();
    }
    // exponents of runs the attacker started, by responder tid
    let mut own: BTreeMap<Term, (Message1, Term)> = BTreeMap::new();
    let mut new_sessions = 0;
    for step in 0..bounds.max_steps {
        let serial = step as u64 * 4;
        let roll = rng.gen_range(0..100);
        let pending = w.pending();
        let action = if roll < 20 && new_sessions < bounds.max_sessions {
            let u = *IDENTITIES.choose(&mut rng).unwrap();
            let v = *IDENTITIES.iter().filter(|x| **x != u).collect::<Vec<_>>().choose(&mut rng).unwrap();
            new_sessions += 1;
            Some(session_action(pair, u, v, rng.gen_bool(0.5)))
        } else if roll < 62 && !pending.is_empty() {
            Some(Action::Deliver { msg: *pending.choose(&mut rng).unwrap() })
        } else if roll < 68 && !pending.is_empty() {
            Some(Action::Drop { msg: *pending.choose(&mut rng).unwrap() })
        } else if roll < 90 {
            inject_move(&w, &mut rng, pair, serial, &mut own)
        } else if roll < 95 {
            reveal_move(&w, &mut rng, pair)
        } else {
            let done: Vec<&Session> = w.sessions.iter().filter(|s| s.imp_sk().is_some()).collect();
            done.choose(&mut rng).map(|s| Action::RevealSk { tid: s.tid.clone() })
        };
        if let Some(a) = action {
            // a move the world refuses is simply not taken
            let _ = w.apply(a);
        }
    }
    w.deduce_committed();
    Explored { seed, pair, schedule: w.schedule, trace: w.trace }
}

fn reveal_move(w: &World, rng: &mut ChaCha20Rng, pair: MethodPair) -> Option<Action> {
    let u = *IDENTITIES.choose(rng).unwrap();
    if pair.is_psk() {
        let v = *IDENTITIES.iter().filter(|x| **x != u).collect::<Vec<_>>().choose(rng).unwrap();
        let _ = w;
        Some(Action::RevealPsk { u: u.into(), v: v.to_string() })
    } else {
        Some(Action::RevealLtk { id: u.into() })
    }
}

fn inject_move(
    w: &World,
    rng: &mut ChaCha20Rng,
    pair: MethodPair,
    serial: u64,
    own: &mut BTreeMap<Term, (Message1, Term)>,
) -> Option<Action> {
    let inject = |to: &Term, s: crate::attacker::Synthesized| Action::Inject {
        to: to.clone(),
        bytes: hex::encode(s.bytes),
        via: s.via,
    };
    match rng.gen_range(0..5) {
        // replay something already on the wire
        0 => {
            let p = w.network.choose(rng)?;
            let s = w.sessions.choose(rng)?;
            Some(Action::Inject { to: s.tid.clone(), bytes: hex::encode(&p.bytes), via: Vec::new() })
        }
        // start a run with the attacker's own exponent
        1 => {
            let targets: Vec<&Session> = w.sessions.iter().filter(|s| s.awaiting_m1()).collect();
            let s = targets.choose(rng)?;
            let Role::Responder { cfg, .. } = &s.role else { return None };
            let x = attacker_fresh(serial);
            let id_psk = if pair.is_psk() {
                let u = *IDENTITIES.iter().filter(|u| **u != cfg.identity).collect::<Vec<_>>().choose(rng)?;
                Some(w.registry.psk(u, &cfg.identity)?.1.clone())
            } else {
                None
            };
            let m1 = Message1 {
                method_i: pair.initiator,
                method_r: pair.responder,
                suites_i: vec![0],
                g_x: Term::exp(Term::g(), x.clone()),
                c_i: Term::public(&format!("cA{serial}")),
                id_psk,
                ad_1: None,
            };
            own.insert(s.tid.clone(), (m1.clone(), x));
            let syn = synthesize(&w.kb, &w.registry, &Pattern::M1(m1))?;
            Some(inject(&s.tid, syn))
        }
        // answer an initiator in someone's name
        2 => {
            let targets: Vec<&Session> = w.sessions.iter().filter(|s| s.awaiting_m2()).collect();
            let s = targets.choose(rng)?;
            let Role::Initiator(st) = &s.role else { return None };
            let as_id = IDENTITIES.choose(rng)?.to_string();
            let pat = Pattern::M2 {
                m1: st.m1.clone(),
                as_id,
                suite: 0,
                y: attacker_fresh(serial + 1),
                c_r: Term::public(&format!("cA{}", serial + 1)),
            };
            let syn = synthesize(&w.kb, &w.registry, &pat)?;
            Some(inject(&s.tid, syn))
        }
        // finish a run the attacker started
        3 => {
            let targets: Vec<&Session> =
                w.sessions.iter().filter(|s| s.awaiting_m3() && own.contains_key(&s.tid)).collect();
            let s = targets.choose(rng)?;
            let Role::Responder { state: Some(rs), cfg, .. } = &s.role else { return None };
            let (m1, x) = own.get(&s.tid)?.clone();
            if m1 != rs.m1 {
                return None;
            }
            let as_id = if pair.is_psk() {
                w.registry.psk_by_id(m1.id_psk.as_ref()?)?.0.to_string()
            } else {
                IDENTITIES.choose(rng)?.to_string()
            };
            let pat = Pattern::M3 { m1, m2: rs.m2.clone(), x, as_id, peer: cfg.identity.clone() };
            let syn = synthesize(&w.kb, &w.registry, &pat)?;
            Some(inject(&s.tid, syn))
        }
        // swap the DH share in a pending message 2
        _ => {
            let cands: Vec<usize> = w
                .pending()
                .into_iter()
                .filter(|&i| matches!(w.message(i), Some(Message::M2(_))))
                .collect();
            let i = *cands.choose(rng)?;
            let Some(Message::M2(mut m2)) = w.message(i) else { return None };
            m2.g_y = Term::exp(Term::g(), attacker_fresh(serial + 2));
            let to = w.network[i].to.clone();
            let syn = synthesize(&w.kb, &w.registry, &Pattern::Raw(Message::M2(m2)))?;
            Some(inject(&to, syn))
        }
    }
}

/// Explore `n_seeds` schedules starting at `first_seed`, in parallel,
/// returned in seed order.
pub fn explore(pair: MethodPair, first_seed: u64, n_seeds: u64, bounds: Bounds) -> Vec<Explored> {
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(16) as u64;
    let seeds: Vec<u64> = (first_seed..first_seed + n_seeds).collect();
    let chunk = seeds.len().div_ceil(workers.max(1) as usize).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(|&s| explore_one(pair, s, bounds)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Seed from the environment, else the given default.
pub fn seed_from_env(default: u64) -> u64 {
    std::env::var(SEED_ENV).ok().and_then(|s| s.parse().ok()).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniq_ltk() {
        let mut reg = Registry::default();
        let mut f = Fresh::default();
        reg.register("A", AuthMethod::Sig, &mut f).unwrap();
        assert!(matches!(reg.register("A", AuthMethod::Sig, &mut f), Err(RegistryError::Duplicate(..))));
        reg.register("A", AuthMethod::Stat, &mut f).unwrap();
        reg.register_psk("A", "B", &mut f).unwrap();
        assert!(reg.register_psk("A", "B", &mut f).is_err());
    }

    #[test]
    fn public_halves_published() {
        let mut w = World::default();
        w.apply(Action::Register { id: "A".into(), method: AuthMethod::Sig }).unwrap();
        let (ltk, cred) = w.registry.long_term("A", AuthMethod::Sig).unwrap();
        let (ltk, cred) = (ltk.clone(), cred.clone());
        assert!(w.kb.can_derive(&cred));
        assert!(!w.kb.can_derive(&ltk));
        w.apply(Action::Register { id: "B".into(), method: AuthMethod::Sig }).unwrap();
        w.apply(Action::RevealLtk { id: "A".into() }).unwrap();
        assert!(w.kb.can_derive(&ltk));
        let ltk_b = w.registry.long_term("B", AuthMethod::Sig).unwrap().0.clone();
        assert!(!w.kb.can_derive(&ltk_b));
    }

    #[test]
    fn event_json_shape() {
        let e = TraceEvent { i: 3, event: Event::LtkRev { who: Term::public("A") } };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, r#"{"i":3,"kind":"LTKRev","payload":{"who":"$A"}}"#);
        assert_eq!(serde_json::from_str::<TraceEvent>(&s).unwrap(), e);
    }

    fn honest(pair: MethodPair) -> World {
        let mut w = World::default();
        for a in setup_actions(pair, &["A", "B"]) {
            w.apply(a).unwrap();
        }
        w.apply(session_action(pair, "A", "B", false)).unwrap();
        for m in 0..3 {
            w.apply(Action::Deliver { msg: m }).unwrap();
        }
        w
    }

    #[test]
    fn honest_schedule_commits() {
        for pair in MethodPair::ALL {
            let w = honest(pair);
            let kinds: Vec<&str> = w.trace.iter().map(|e| e.event.kind()).collect();
            assert!(kinds.contains(&"CommitI") && kinds.contains(&"CommitR"), "{pair}: {kinds:?}");
            assert_eq!(w.sessions[0].imp_sk(), w.sessions[1].imp_sk());
        }
    }

    #[test]
    fn dropped_m2_stalls() {
        let pair = MethodPair::SIG_SIG;
        let mut w = World::default();
        for a in setup_actions(pair, &["A", "B"]) {
            w.apply(a).unwrap();
        }
        w.apply(session_action(pair, "A", "B", false)).unwrap();
        w.apply(Action::Deliver { msg: 0 }).unwrap();
        w.apply(Action::Drop { msg: 1 }).unwrap();
        assert!(w.trace.iter().all(|e| e.event.kind() != "CommitI"));
        assert_eq!(w.apply(Action::Deliver { msg: 1 }), Err(EnvError::Consumed(1)));
    }

    #[test]
    fn everything_sent_is_known_first() {
        let w = honest(MethodPair::STAT_STAT);
        for e in &w.trace {
            if let Event::Delivered { msg, .. } = e.event {
                assert!(w.trace[..e.i].iter().any(|p| matches!(p.event, Event::AttackerKnows { msg: Some(m), .. } if m == msg)));
            }
        }
    }

    #[test]
    fn reveal_sk_requires_commit() {
        let pair = MethodPair::SIG_SIG;
        let mut w = World::default();
        for a in setup_actions(pair, &["A", "B"]) {
            w.apply(a).unwrap();
        }
        w.apply(session_action(pair, "A", "B", false)).unwrap();
        let tid = w.sessions[0].tid.clone();
        assert!(matches!(w.apply(Action::RevealSk { tid }), Err(EnvError::NotCommitted(_))));
    }

    #[test]
    fn underivable_injection_is_refused() {
        let mut w = honest(MethodPair::SIG_SIG);
        let fake = Message::M1(Message1 {
            method_i: AuthMethod::Sig,
            method_r: AuthMethod::Sig,
            suites_i: vec![0],
            g_x: Term::exp(Term::g(), Term::fresh("x", 999)),
            c_i: Term::public("c"),
            id_psk: None,
            ad_1: None,
        });
        let to = w.sessions[1].tid.clone();
        let r = w.apply(Action::Inject { to, bytes: hex::encode(encode(&fake)), via: vec![] });
        assert!(matches!(r, Err(EnvError::Underivable(_))));
    }

    #[test]
    fn schedule_replays_identically() {
        let e = explore_one(MethodPair::STAT_SIG, 7, Bounds::default());
        let again = World::replay(&e.schedule, DEFAULT_DEPTH).unwrap();
        assert_eq!(trace_to_jsonl(&again.trace), trace_to_jsonl(&e.trace));
        let text = schedule_to_jsonl(&e.schedule);
        assert_eq!(schedule_from_jsonl(&text).unwrap(), e.schedule);
    }
}
