//! Named, scripted runs with their expected verdict tables.

use std::fmt;

use thiserror::Error;

use crate::attacker::{attacker_fresh, synthesize, Pattern};
use crate::environment::{
    session_action, setup_actions, Action, Bounds, EnvError, Role, Trace, World,
};
use crate::properties::{Checker, Lemma, Outcome, TraceError};
use crate::roles::{
    build_m2, negotiate_meta, AuthMethod, InitiatorConfig, MethodPair, Persona, ResponderConfig,
    SuiteCache,
};
use crate::term::{Fresh, Term};
use crate::wire::{encode, Message, Message1};

pub const SCENARIOS: [(&str, &str); 7] = [
    ("honest", "one run between A and B, every message delivered"),
    ("unintended-peer", "B wants C, the attacker answers as compromised A"),
    ("pfs", "honest run, then both long-term keys leak"),
    ("sk-independence", "two runs, the first run's key is revealed"),
    ("replay-m3", "message 3 of a finished run is replayed to a fresh responder"),
    ("reveal-before", "A's key leaks first, the attacker then talks to B as A"),
    ("negotiation", "suite negotiation with and without a cross-run cache"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    pub pair: MethodPair,
    pub mitigation: bool,
    /// Reveal A's key in the unintended-peer scenario.
    pub compromise: bool,
    pub seed: u64,
}

impl Default for Options {
    fn default() -> Self {
        Options { pair: MethodPair::SIG_SIG, mitigation: false, compromise: true, seed: 0 }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0}")]
    Unknown(String),
    #[error("scenario {0} does not apply to {1}")]
    NotApplicable(&'static str, MethodPair),
    #[error("schedule step {0}: {1}")]
    Env(usize, EnvError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("attacker cannot build {0}")]
    Synthesis(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub label: String,
    pub result: Outcome,
    pub expected: Outcome,
    /// A predicted Fail: reported, not an error.
    pub finding: bool,
    pub witness: Vec<usize>,
    pub detail: String,
}

impl Row {
    pub fn as_expected(&self) -> bool {
        self.result == self.expected
    }

    fn status(&self) -> &'static str {
        match (self.as_expected(), self.finding) {
            (false, _) => "UNEXPECTED",
            (true, true) => "expected finding",
            (true, false) => "ok",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub name: &'static str,
    pub pair: Option<MethodPair>,
    pub bounds: Bounds,
    pub schedule: Vec<Action>,
    pub trace: Trace,
    pub rows: Vec<Row>,
}

impl ScenarioRun {
    pub fn all_as_expected(&self) -> bool {
        self.rows.iter().all(Row::as_expected)
    }

    pub fn row(&self, label: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// 0 if every row passed, 1 if anything failed, expected or not.
    pub fn exit_code(&self) -> i32 {
        if self.rows.iter().all(|r| r.result == Outcome::Pass) {
            0
        } else {
            1
        }
    }
}

impl fmt::Display for ScenarioRun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pair {
            Some(p) => writeln!(f, "scenario {} ({p})", self.name)?,
            None => writeln!(f, "scenario {}", self.name)?,
        }
        for r in &self.rows {
            let res = if r.result == Outcome::Pass { "PASS" } else { "FAIL" };
            let exp = if r.expected == Outcome::Pass { "pass" } else { "fail" };
            write!(f, "  {res}  {:40} expect={exp:4}  {:16}", r.label, r.status())?;
            if !r.witness.is_empty() {
                write!(f, " witness={:?}", r.witness)?;
            }
            if !r.detail.is_empty() {
                write!(f, " {}", r.detail)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn outcome(ok: bool) -> Outcome {
    if ok {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

struct Script {
    world: World,
    rows: Vec<Row>,
    bounds: Bounds,
}

impl Script {
    fn new(seed: u64, pair: MethodPair, ids: &[&str]) -> Result<Script, ScenarioError> {
        let bounds = Bounds::default();
        let mut s = Script { world: World::new(bounds.depth), rows: Vec::new(), bounds };
        s.act(Action::Seed { seed })?;
        for a in setup_actions(pair, ids) {
            s.act(a)?;
        }
        Ok(s)
    }

    fn act(&mut self, a: Action) -> Result<(), ScenarioError> {
        let step = self.world.schedule.len();
        self.world.apply(a).map_err(|e| ScenarioError::Env(step, e))
    }

    fn deliver_all(&mut self) -> Result<(), ScenarioError> {
        while let Some(&m) = self.world.pending().first() {
            self.act(Action::Deliver { msg: m })?;
        }
        Ok(())
    }

    fn expect(&mut self, lemma: Lemma, expected: Outcome) -> Result<(), ScenarioError> {
        let v = Checker::new(&self.world.trace, self.bounds)?.check(lemma);
        self.rows.push(Row {
            label: lemma.name().to_string(),
            result: v.result,
            expected,
            finding: expected == Outcome::Fail,
            witness: v.witness,
            detail: v.detail,
        });
        Ok(())
    }

    fn expect_core(&mut self) -> Result<(), ScenarioError> {
        for l in Lemma::CORE {
            self.expect(l, Outcome::Pass)?;
        }
        Ok(())
    }

    fn claim(&mut self, label: &str, holds: bool, expected: bool, detail: String) {
        self.rows.push(Row {
            label: label.to_string(),
            result: outcome(holds),
            expected: outcome(expected),
            finding: !expected,
            witness: Vec::new(),
            detail,
        });
    }

    fn underivable(&self, sk: &Term) -> Result<bool, ScenarioError> {
        Ok(Checker::new(&self.world.trace, self.bounds)?.known_at(sk).is_none())
    }

    fn finish(self, name: &'static str, pair: Option<MethodPair>) -> ScenarioRun {
        ScenarioRun {
            name,
            pair,
            bounds: self.bounds,
            schedule: self.world.schedule,
            trace: self.world.trace,
            rows: self.rows,
        }
    }
}

pub fn run(name: &str, opts: Options) -> Result<ScenarioRun, ScenarioError> {
    match name {
        "honest" => scenario_honest(opts.pair, opts.seed),
        "unintended-peer" => scenario_unintended_peer(opts.mitigation, opts.compromise, opts.pair, opts.seed),
        "pfs" => scenario_pfs(opts.pair, opts.seed),
        "sk-independence" => scenario_sk_independence(opts.pair, opts.seed),
        "replay-m3" => scenario_replay_m3(opts.pair, opts.seed),
        "reveal-before" => scenario_reveal_before(opts.pair, opts.seed),
        "negotiation" => Ok(scenario_negotiation()),
        other => Err(ScenarioError::Unknown(other.to_string())),
    }
}

pub fn scenario_honest(pair: MethodPair, seed: u64) -> Result<ScenarioRun, ScenarioError> {
    let mut s = Script::new(seed, pair, &["A", "B"])?;
    s.act(session_action(pair, "A", "B", false))?;
    s.deliver_all()?;
    s.world.deduce_committed();
    s.expect_core()?;
    let stat_i = pair.initiator == AuthMethod::Stat;
    s.expect(Lemma::InjAgreeIImpSk, outcome(!stat_i))?;

    let (i, r) = (&s.world.sessions[0], &s.world.sessions[1]);
    let same = i.imp_sk().is_some() && i.imp_sk() == r.imp_sk();
    let Role::Initiator(ist) = &i.role else { unreachable!() };
    let ks = ist.schedule.clone().expect("completed run");
    let collapse = ks.prk_2e == ks.prk_3e2m && Some(&ks.prk_3e2m) == ks.prk_4x3m.as_ref();
    let collapse_expected = !pair.initiator_stat() && !pair.responder_stat();
    s.claim("both sides hold the same key material", same, true, String::new());
    let detail = if collapse { "PRK_2e = PRK_3e2m = PRK_4x3m" } else { "PRKs differ" };
    s.claim("key hierarchy collapses as the method predicts", collapse == collapse_expected, true, detail.into());
    Ok(s.finish("honest", Some(pair)))
}

/// B, honest, wants to reach C. The attacker holds A's key, drops C's
/// reply and answers as A.
pub fn scenario_unintended_peer(
    mitigation: bool,
    compromise: bool,
    pair: MethodPair,
    seed: u64,
) -> Result<ScenarioRun, ScenarioError> {
    if pair.is_psk() {
        return Err(ScenarioError::NotApplicable("unintended-peer", pair));
    }
    let mut s = Script::new(seed, pair, &["A", "B", "C"])?;
    if compromise {
        s.act(Action::RevealLtk { id: "A".into() })?;
    }
    s.act(session_action(pair, "B", "C", mitigation))?;
    s.act(Action::Deliver { msg: 0 })?;
    s.act(Action::Drop { msg: 1 })?;

    let Some(Message::M1(m1)) = s.world.message(0) else { unreachable!() };
    let a = Persona::lookup(&s.world.registry, "A", pair.responder).expect("A is registered");
    let y = attacker_fresh(0);
    let m2 = build_m2(&m1, 0, &a, None, &y, &Term::public("cA0")).m2;
    let msg = Message::M2(m2);
    let via = s.world.kb.plan(&msg.terms()).unwrap_or_default();
    let to = s.world.sessions[0].tid.clone();
    s.act(Action::Inject { to, bytes: hex::encode(encode(&msg)), via })?;
    s.deliver_all()?;
    s.world.deduce_committed();

    s.expect_core()?;
    s.expect(Lemma::IntendedPeer, outcome(mitigation))?;
    let commit = s.world.trace.iter().find_map(|e| match &e.event {
        crate::environment::Event::CommitI { v, intended, .. } => Some((v.clone(), intended.clone())),
        _ => None,
    });
    let aborted = s.world.trace.iter().any(|e| {
        matches!(&e.event, crate::environment::Event::Abort { reason, .. } if reason == "unintended-peer")
    });
    if mitigation {
        s.claim("initiator aborts with unintended-peer", aborted && commit.is_none(), true, String::new());
    } else {
        let hit = commit == Some((Term::public("A"), Term::public("C")));
        let detail = commit.map(|(v, i)| format!("CommitI peer {v}, intended {i}")).unwrap_or_default();
        s.claim("initiator commits to A instead of C", hit, true, detail);
    }
    Ok(s.finish("unintended-peer", Some(pair)))
}

fn reveal_long_term(s: &mut Script, pair: MethodPair, ids: &[(&str, &str)]) -> Result<(), ScenarioError> {
    for (u, v) in ids {
        if pair.is_psk() {
            s.act(Action::RevealPsk { u: u.to_string(), v: v.to_string() })?;
        } else {
            s.act(Action::RevealLtk { id: u.to_string() })?;
            s.act(Action::RevealLtk { id: v.to_string() })?;
        }
    }
    Ok(())
}

/// Long-term keys leak after the run completed.
pub fn scenario_pfs(pair: MethodPair, seed: u64) -> Result<ScenarioRun, ScenarioError> {
    let mut s = Script::new(seed, pair, &["A", "B"])?;
    s.act(session_action(pair, "A", "B", false))?;
    s.deliver_all()?;
    reveal_long_term(&mut s, pair, &[("A", "B")])?;
    s.world.deduce_committed();
    s.expect_core()?;
    let sk = s.world.sessions[0].imp_sk().cloned().expect("run completed");
    let hidden = s.underivable(&sk)?;
    s.claim("key stays secret after the reveal", hidden, true, String::new());
    Ok(s.finish("pfs", Some(pair)))
}

/// Two runs; the first one's key is handed to the attacker.
pub fn scenario_sk_independence(pair: MethodPair, seed: u64) -> Result<ScenarioRun, ScenarioError> {
    let mut s = Script::new(seed, pair, &["A", "B"])?;
    s.act(session_action(pair, "A", "B", false))?;
    s.deliver_all()?;
    s.act(session_action(pair, "A", "B", false))?;
    s.deliver_all()?;
    let tid = s.world.sessions[0].tid.clone();
    s.act(Action::RevealSk { tid })?;
    s.world.deduce_committed();
    s.expect_core()?;
    let sk2 = s.world.sessions[2].imp_sk().cloned().expect("second run completed");
    let hidden = s.underivable(&sk2)?;
    s.claim("second key stays secret", hidden, true, String::new());
    Ok(s.finish("sk-independence", Some(pair)))
}

/// A recorded message 3 is fed to a second responder run.
pub fn scenario_replay_m3(pair: MethodPair, seed: u64) -> Result<ScenarioRun, ScenarioError> {
    let mut s = Script::new(seed, pair, &["A", "B"])?;
    s.act(session_action(pair, "A", "B", false))?;
    s.deliver_all()?;
    s.act(session_action(pair, "A", "B", false))?;
    s.act(Action::Deliver { msg: 3 })?;
    let m3 = hex::encode(&s.world.network[2].bytes);
    let to = s.world.sessions[3].tid.clone();
    s.act(Action::Inject { to, bytes: m3, via: Vec::new() })?;
    s.world.deduce_committed();
    s.expect_core()?;
    let commits = s
        .world
        .trace
        .iter()
        .filter(|e| matches!(e.event, crate::environment::Event::CommitR { .. }))
        .count();
    s.claim("replayed message 3 yields no second responder commit", commits == 1, true, format!("{commits} CommitR"));
    Ok(s.finish("replay-m3", Some(pair)))
}

/// A's key leaks, then the attacker runs a full session with B as A.
pub fn scenario_reveal_before(pair: MethodPair, seed: u64) -> Result<ScenarioRun, ScenarioError> {
    let mut s = Script::new(seed, pair, &["A", "B"])?;
    if pair.is_psk() {
        s.act(Action::RevealPsk { u: "A".into(), v: "B".into() })?;
    } else {
        s.act(Action::RevealLtk { id: "A".into() })?;
    }
    s.act(session_action(pair, "A", "B", false))?;
    s.act(Action::Drop { msg: 0 })?;

    let x = attacker_fresh(0);
    let m1 = Message1 {
        method_i: pair.initiator,
        method_r: pair.responder,
        suites_i: vec![0],
        g_x: Term::exp(Term::g(), x.clone()),
        c_i: Term::public("cA0"),
        id_psk: s.world.registry.psk("A", "B").map(|(_, id)| id.clone()),
        ad_1: None,
    };
    let to = s.world.sessions[1].tid.clone();
    let syn = synthesize(&s.world.kb, &s.world.registry, &Pattern::M1(m1.clone()))
        .ok_or(ScenarioError::Synthesis("message 1"))?;
    s.act(Action::Inject { to: to.clone(), bytes: hex::encode(syn.bytes), via: syn.via })?;
    let Some(Message::M2(m2)) = s.world.message(1) else {
        return Err(ScenarioError::Synthesis("message 3: responder did not answer"));
    };
    let pat = Pattern::M3 { m1, m2, x, as_id: "A".into(), peer: "B".into() };
    let syn = synthesize(&s.world.kb, &s.world.registry, &pat).ok_or(ScenarioError::Synthesis("message 3"))?;
    s.act(Action::Inject { to, bytes: hex::encode(syn.bytes), via: syn.via })?;
    s.world.deduce_committed();
    s.expect_core()?;
    let sk = s.world.sessions[1].imp_sk().cloned();
    let leaked = match &sk {
        Some(sk) => !s.underivable(sk)?,
        None => false,
    };
    s.claim("B commits and the attacker holds the key", leaked, true, String::new());
    Ok(s.finish("reveal-before", Some(pair)))
}

pub fn negotiation_parties() -> (InitiatorConfig, ResponderConfig) {
    let pair = MethodPair::SIG_SIG;
    let ic = InitiatorConfig {
        identity: "A".into(),
        intended_peer: "B".into(),
        pair,
        suites: vec![2, 1, 0],
        mitigation: false,
    };
    let rc = ResponderConfig { identity: "B".into(), supported_suites: [0].into(), accepted_pairs: vec![pair] };
    (ic, rc)
}

/// Run counts for a cold meta-session, then a repeat with and without
/// the cache, then an empty intersection.
pub fn scenario_negotiation() -> ScenarioRun {
    let mut reg = crate::environment::Registry::default();
    let mut fresh = Fresh::default();
    for id in ["A", "B"] {
        reg.register(id, AuthMethod::Sig, &mut fresh).expect("fresh registry");
    }
    let (ic, rc) = negotiation_parties();
    let mut rows = Vec::new();
    let mut claim = |label: &str, holds: bool, detail: String| {
        rows.push(Row {
            label: label.to_string(),
            result: outcome(holds),
            expected: Outcome::Pass,
            finding: false,
            witness: Vec::new(),
            detail,
        });
    };
    let runs = |r: &Result<crate::roles::MetaOutcome, crate::roles::NegotiationFailed>| match r {
        Ok(m) => m.runs.len(),
        Err(f) => f.runs.len(),
    };

    for retain in [true, false] {
        let mut cache = SuiteCache::new(retain);
        let cold = negotiate_meta(&ic, &rc, &reg, &mut fresh, &mut cache);
        let warm = negotiate_meta(&ic, &rc, &reg, &mut fresh, &mut cache);
        if retain {
            claim("[2,1,0] x {0} converges in 2 runs", cold.is_ok() && runs(&cold) == 2, format!("{} runs", runs(&cold)));
            claim("cached repeat converges in 1 run", warm.is_ok() && runs(&warm) == 1, format!("{} runs", runs(&warm)));
        } else {
            claim("uncached repeat needs 2 runs again", warm.is_ok() && runs(&warm) == 2, format!("{} runs", runs(&warm)));
        }
    }
    let disjoint = InitiatorConfig { suites: vec![2, 1], ..ic };
    let r = negotiate_meta(&disjoint, &rc, &reg, &mut fresh, &mut SuiteCache::new(false));
    let detail = match &r {
        Ok(_) => "agreed".to_string(),
        Err(f) => format!("negotiation-failed after {} run(s)", f.runs.len()),
    };
    claim("empty intersection fails", r.is_err(), detail);
    ScenarioRun {
        name: "negotiation",
        pair: Some(MethodPair::SIG_SIG),
        bounds: Bounds::default(),
        schedule: Vec::new(),
        trace: Vec::new(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_scenario_matches_its_table() {
        for (name, _) in SCENARIOS {
            let pairs: &[MethodPair] = match name {
                "unintended-peer" => &[MethodPair::SIG_SIG, MethodPair::STAT_STAT],
                "negotiation" => &[MethodPair::SIG_SIG],
                _ => &MethodPair::ALL,
            };
            for &pair in pairs {
                for mitigation in [false, true] {
                    let r = run(name, Options { pair, mitigation, ..Options::default() }).unwrap();
                    assert!(r.all_as_expected(), "{r}");
                }
            }
        }
    }

    #[test]
    fn honest_attacker_cannot_impersonate() {
        let r = scenario_unintended_peer(false, false, MethodPair::SIG_SIG, 0);
        assert!(matches!(r, Err(ScenarioError::Env(_, EnvError::Underivable(_)))), "{r:?}");
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(run("nope", Options::default()), Err(ScenarioError::Unknown(_))));
    }
}
