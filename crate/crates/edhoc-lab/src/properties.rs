//! The security lemmas as predicates over finished traces.
//!
//! | lemma                            | checker                    |
//! |----------------------------------|----------------------------|
//! | authInjAgreeGuaranteeForI        | [`check_inj_agreement_for_i`] |
//! | authInjAgreeGuaranteeForR        | [`check_inj_agreement_for_r`] |
//! | authGIYImplicitAuthGuaranteeForI | [`check_implicit_auth_for_i`] |
//! | secrecyPFSGIYSessionKey          | [`check_secrecy_pfs`]         |

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacker::KnowledgeBase;
use crate::environment::{Bounds, Event, TraceEvent};
use crate::term::Term;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lemma {
    #[serde(rename = "authInjAgreeGuaranteeForI")]
    InjAgreeI,
    /// The initiator lemma with impSk in place of expSk.
    #[serde(rename = "authInjAgreeGuaranteeForI[impSk]")]
    InjAgreeIImpSk,
    #[serde(rename = "authInjAgreeGuaranteeForR")]
    InjAgreeR,
    #[serde(rename = "authGIYImplicitAuthGuaranteeForI")]
    ImplicitAuthI,
    #[serde(rename = "secrecyPFSGIYSessionKey")]
    SecrecyPfs,
    /// Policy: the initiator only commits to the peer it meant to reach.
    #[serde(rename = "intendedPeer")]
    IntendedPeer,
}

impl Lemma {
    /// The four lemmas every method is expected to satisfy.
    pub const CORE: [Lemma; 4] = [Lemma::InjAgreeI, Lemma::InjAgreeR, Lemma::ImplicitAuthI, Lemma::SecrecyPfs];
    pub const ALL: [Lemma; 6] = [
        Lemma::InjAgreeI,
        Lemma::InjAgreeIImpSk,
        Lemma::InjAgreeR,
        Lemma::ImplicitAuthI,
        Lemma::SecrecyPfs,
        Lemma::IntendedPeer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Lemma::InjAgreeI => "authInjAgreeGuaranteeForI",
            Lemma::InjAgreeIImpSk => "authInjAgreeGuaranteeForI[impSk]",
            Lemma::InjAgreeR => "authInjAgreeGuaranteeForR",
            Lemma::ImplicitAuthI => "authGIYImplicitAuthGuaranteeForI",
            Lemma::SecrecyPfs => "secrecyPFSGIYSessionKey",
            Lemma::IntendedPeer => "intendedPeer",
        }
    }
}

impl fmt::Display for Lemma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Lemma {
    type Err = String;

    fn from_str(s: &str) -> Result<Lemma, String> {
        Lemma::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown lemma {s}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub lemma: Lemma,
    pub result: Outcome,
    pub bounds: Bounds,
    /// Fail: the violating events. Pass: the events that discharged it.
    pub witness: Vec<usize>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.result == Outcome::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = match self.result {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
        };
        write!(f, "{r:4}  {:34} witness={:?}", self.lemma.name(), self.witness)?;
        if !self.detail.is_empty() {
            write!(f, "  {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("event at position {pos} has index {found}")]
    Index { pos: usize, found: usize },
}

pub fn well_formed(trace: &[TraceEvent]) -> Result<(), TraceError> {
    match trace.iter().enumerate().find(|(p, e)| e.i != *p) {
        Some((pos, e)) => Err(TraceError::Index { pos, found: e.i }),
        None => Ok(()),
    }
}

/// Offline checking context: the trace plus lazily computed `K(t)`.
pub struct Checker<'a> {
    trace: &'a [TraceEvent],
    bounds: Bounds,
    final_kb: KnowledgeBase,
    known_at: HashMap<Term, Option<usize>>,
}

impl<'a> Checker<'a> {
    pub fn new(trace: &'a [TraceEvent], bounds: Bounds) -> Result<Checker<'a>, TraceError> {
        well_formed(trace)?;
        let mut final_kb = KnowledgeBase::new(bounds.depth);
        for e in trace {
            for t in e.event.attacker_terms() {
                final_kb.observe(t);
            }
        }
        Ok(Checker { trace, bounds, final_kb, known_at: HashMap::new() })
    }

    /// `K(t)@i`: the earliest index after which the attacker derives `t`.
    pub fn known_at(&mut self, t: &Term) -> Option<usize> {
        if let Some(r) = self.known_at.get(t) {
            return *r;
        }
        let r = if self.final_kb.can_derive(t) {
            let mut kb = KnowledgeBase::new(self.bounds.depth);
            let mut at = None;
            if kb.can_derive(t) {
                at = Some(0);
            } else {
                for e in self.trace {
                    let ts = e.event.attacker_terms();
                    if ts.is_empty() {
                        continue;
                    }
                    for x in ts {
                        kb.observe(x);
                    }
                    if kb.can_derive(t) {
                        at = Some(e.i);
                        break;
                    }
                }
            }
            at
        } else {
            None
        };
        self.known_at.insert(t.clone(), r);
        r
    }

    fn verdict(&self, lemma: Lemma, fail: Option<(Vec<usize>, String)>, pass_witness: Vec<usize>) -> Verdict {
        match fail {
            Some((witness, detail)) => Verdict { lemma, result: Outcome::Fail, bounds: self.bounds, witness, detail },
            None => Verdict {
                lemma,
                result: Outcome::Pass,
                bounds: self.bounds,
                witness: pass_witness,
                detail: String::new(),
            },
        }
    }

    /// Index of `LTKRev(u)`, `LTKRev(v)` or `LTKRev(<u,v>)` strictly before
    /// `before`, if any.
    fn reveal(&self, u: &Term, v: &Term, pair: bool, before: Option<usize>) -> Option<usize> {
        let uv = Term::tuple(vec![u.clone(), v.clone()]);
        self.trace
            .iter()
            .take_while(|e| before.is_none_or(|b| e.i < b))
            .find(|e| matches!(&e.event, Event::LtkRev { who } if who == u || who == v || (pair && *who == uv)))
            .map(|e| e.i)
    }

    fn sk_rev(&self, sk: &Term) -> Option<usize> {
        self.trace
            .iter()
            .find(|e| matches!(&e.event, Event::SkRev { sk: s, .. } if s == sk))
            .map(|e| e.i)
    }

    fn inj_agreement_i(&self, lemma: Lemma) -> Verdict {
        let commits: Vec<(usize, &Term, &Term, &Term)> = self
            .trace
            .iter()
            .filter_map(|e| match (&e.event, lemma) {
                (Event::ExpCommitI { u, v, sk, .. }, Lemma::InjAgreeI) => Some((e.i, u, v, sk)),
                (Event::CommitI { u, v, sk, .. }, Lemma::InjAgreeIImpSk) => Some((e.i, u, v, sk)),
                _ => None,
            })
            .collect();
        let mut matched = Vec::new();
        for &(i, u, v, sk) in &commits {
            let running = self.trace[..i]
                .iter()
                .find(|e| matches!(&e.event, Event::ExpRunningR { v: v2, sk: s2, .. } if v2 == v && s2 == sk));
            let dup = commits.iter().find(|(i2, _, _, s2)| *s2 == sk && *i2 != i);
            if let (Some(j), None) = (running, dup) {
                matched.extend([j.i, i]);
                continue;
            }
            if let Some(k) = self.reveal(u, v, true, Some(i)) {
                matched.extend([k, i]);
                continue;
            }
            let fail = match dup {
                Some((i2, ..)) => (vec![i.min(*i2), i.max(*i2)], "two initiator commits share key material".into()),
                None => (vec![i], "no earlier responder run with this key material".into()),
            };
            return self.verdict(lemma, Some(fail), Vec::new());
        }
        self.verdict(lemma, None, matched)
    }

    fn inj_agreement_r(&self) -> Verdict {
        let commits: Vec<(usize, &Term, &Term, &Term)> = self
            .trace
            .iter()
            .filter_map(|e| match &e.event {
                Event::CommitR { u, v, sk, .. } => Some((e.i, u, v, sk)),
                _ => None,
            })
            .collect();
        let mut matched = Vec::new();
        for &(i, u, v, sk) in &commits {
            let running = self.trace[..i].iter().find(
                |e| matches!(&e.event, Event::RunningI { u: u2, v: v2, sk: s2, .. } if u2 == u && v2 == v && s2 == sk),
            );
            let dup = commits.iter().find(|(i2, _, _, s2)| *s2 == sk && *i2 != i);
            if let (Some(j), None) = (running, dup) {
                matched.extend([j.i, i]);
                continue;
            }
            if let Some(k) = self.reveal(u, v, true, Some(i)) {
                matched.extend([k, i]);
                continue;
            }
            let fail = match dup {
                Some((i2, ..)) => (vec![i.min(*i2), i.max(*i2)], "two responder commits share key material".into()),
                None => (vec![i], "no earlier initiator run with these identities and key".into()),
            };
            return self.verdict(Lemma::InjAgreeR, Some(fail), Vec::new());
        }
        self.verdict(Lemma::InjAgreeR, None, matched)
    }

    fn implicit_auth_i(&mut self) -> Verdict {
        let commits: Vec<(usize, Term, Term, Term)> = self
            .trace
            .iter()
            .filter_map(|e| match &e.event {
                Event::CommitI { u, v, sk, .. } => Some((e.i, u.clone(), v.clone(), sk.clone())),
                _ => None,
            })
            .collect();
        let mut matched = Vec::new();
        for (i, u, v, sk) in commits {
            let rs: Vec<(usize, &Term, &Term)> = self
                .trace
                .iter()
                .filter_map(|e| match &e.event {
                    Event::CommitR { u, v, sk: s2, .. } if *s2 == sk => Some((e.i, u, v)),
                    _ => None,
                })
                .collect();
            let mismatch = rs.iter().find(|(_, u2, v2)| **u2 != u || **v2 != v).map(|r| r.0);
            let dup = if rs.len() > 1 { Some((rs[0].0, rs[1].0)) } else { None };
            let rs: Vec<usize> = rs.iter().map(|r| r.0).collect();
            let leaked = if mismatch.is_none() && dup.is_none() { self.known_at(&sk) } else { None };
            if mismatch.is_none() && dup.is_none() && leaked.is_none() {
                matched.push(i);
                matched.extend(rs);
                continue;
            }
            if let Some(k) = self.reveal(&u, &v, true, None) {
                matched.extend([k, i]);
                continue;
            }
            // the key was handed out on purpose, as in the secrecy lemma
            if let (None, None, Some(l)) = (mismatch, dup, self.sk_rev(&sk)) {
                matched.extend([l, i]);
                continue;
            }
            let fail = if let Some(j) = mismatch {
                (vec![i, j], "responder commit disagrees on identities".into())
            } else if let Some((a, b)) = dup {
                (vec![i, a, b], "two responder commits share key material".into())
            } else {
                (vec![i, leaked.unwrap()], "attacker derives impSk".into())
            };
            return self.verdict(Lemma::ImplicitAuthI, Some(fail), Vec::new());
        }
        self.verdict(Lemma::ImplicitAuthI, None, matched)
    }

    fn secrecy_pfs(&mut self) -> Verdict {
        let commits: Vec<(usize, Term, Term, Term)> = self
            .trace
            .iter()
            .filter_map(|e| match &e.event {
                Event::CommitI { u, v, sk, .. } | Event::CommitR { u, v, sk, .. } => {
                    Some((e.i, u.clone(), v.clone(), sk.clone()))
                }
                _ => None,
            })
            .collect();
        let mut matched = Vec::new();
        for (j, u, v, sk) in commits {
            let Some(i) = self.known_at(&sk) else { continue };
            // a PSK reveal is a reveal of both holders' key
            if let Some(l) = self.reveal(&u, &v, true, Some(j)) {
                matched.extend([l, j]);
                continue;
            }
            if let Some(l) = self.sk_rev(&sk) {
                matched.extend([l, j]);
                continue;
            }
            return self.verdict(Lemma::SecrecyPfs, Some((vec![i, j], "attacker derives committed key".into())), Vec::new());
        }
        self.verdict(Lemma::SecrecyPfs, None, matched)
    }

    fn intended_peer(&self) -> Verdict {
        let mut seen = Vec::new();
        for e in self.trace {
            if let Event::CommitI { v, intended, .. } = &e.event {
                if v != intended {
                    let detail = format!("committed to {v}, intended {intended}");
                    return self.verdict(Lemma::IntendedPeer, Some((vec![e.i], detail)), Vec::new());
                }
                seen.push(e.i);
            }
        }
        self.verdict(Lemma::IntendedPeer, None, seen)
    }

    pub fn check(&mut self, lemma: Lemma) -> Verdict {
        match lemma {
            Lemma::InjAgreeI | Lemma::InjAgreeIImpSk => self.inj_agreement_i(lemma),
            Lemma::InjAgreeR => self.inj_agreement_r(),
            Lemma::ImplicitAuthI => self.implicit_auth_i(),
            Lemma::SecrecyPfs => self.secrecy_pfs(),
            Lemma::IntendedPeer => self.intended_peer(),
        }
    }
}

pub fn check_inj_agreement_for_i(trace: &[TraceEvent], bounds: Bounds) -> Result<Verdict, TraceError> {
    Ok(Checker::new(trace, bounds)?.check(Lemma::InjAgreeI))
}

pub fn check_inj_agreement_for_i_imp_sk(trace: &[TraceEvent], bounds: Bounds) -> Result<Verdict, TraceError> {
    Ok(Checker::new(trace, bounds)?.check(Lemma::InjAgreeIImpSk))
}

pub fn check_inj_agreement_for_r(trace: &[TraceEvent], bounds: Bounds) -> Result<Verdict, TraceError> {
    Ok(Checker::new(trace, bounds)?.check(Lemma::InjAgreeR))
}

pub fn check_implicit_auth_for_i(trace: &[TraceEvent], bounds: Bounds) -> Result<Verdict, TraceError> {
    Ok(Checker::new(trace, bounds)?.check(Lemma::ImplicitAuthI))
}

pub fn check_secrecy_pfs(trace: &[TraceEvent], bounds: Bounds) -> Result<Verdict, TraceError> {
    Ok(Checker::new(trace, bounds)?.check(Lemma::SecrecyPfs))
}

pub fn check_all(trace: &[TraceEvent], lemmas: &[Lemma], bounds: Bounds) -> Result<Vec<Verdict>, TraceError> {
    let mut c = Checker::new(trace, bounds)?;
    Ok(lemmas.iter().map(|l| c.check(*l)).collect())
}

/// 0 when everything passed, 1 otherwise.
pub fn exit_code(verdicts: &[Verdict]) -> i32 {
    if verdicts.iter().all(Verdict::passed) {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{session_action, setup_actions, Action, World};
    use crate::roles::MethodPair;

    fn t(s: &str) -> Term {
        s.parse().unwrap()
    }

    fn trace(events: Vec<Event>) -> Vec<TraceEvent> {
        events.into_iter().enumerate().map(|(i, event)| TraceEvent { i, event }).collect()
    }

    fn honest(pair: MethodPair) -> Vec<TraceEvent> {
        let mut w = World::default();
        for a in setup_actions(pair, &["A", "B"]) {
            w.apply(a).unwrap();
        }
        w.apply(session_action(pair, "A", "B", false)).unwrap();
        for m in 0..3 {
            w.apply(Action::Deliver { msg: m }).unwrap();
        }
        w.deduce_committed();
        w.trace
    }

    #[test]
    fn empty_trace_passes() {
        for l in Lemma::ALL {
            assert!(check_all(&[], &[l], Bounds::default()).unwrap()[0].passed());
        }
    }

    #[test]
    fn duplicate_exp_commit_fails_with_both() {
        let c = |tid: &str| Event::ExpCommitI { tid: t(tid), u: t("$A"), v: t("$B"), sk: t("~k#1") };
        let tr = trace(vec![
            Event::ExpRunningR { tid: t("~r#1"), v: t("$B"), sk: t("~k#1") },
            c("~t#1"),
            c("~t#2"),
        ]);
        let v = check_inj_agreement_for_i(&tr, Bounds::default()).unwrap();
        assert_eq!((v.result, v.witness), (Outcome::Fail, vec![1, 2]));
    }

    #[test]
    fn reveal_before_excuses() {
        let tr = trace(vec![
            Event::LtkRev { who: t("<$A,$B>") },
            Event::ExpCommitI { tid: t("~t#1"), u: t("$A"), v: t("$B"), sk: t("~k#1") },
        ]);
        assert!(check_inj_agreement_for_i(&tr, Bounds::default()).unwrap().passed());
        let late = trace(vec![
            Event::ExpCommitI { tid: t("~t#1"), u: t("$A"), v: t("$B"), sk: t("~k#1") },
            Event::LtkRev { who: t("$B") },
        ]);
        assert!(!check_inj_agreement_for_i(&late, Bounds::default()).unwrap().passed());
    }

    #[test]
    fn implicit_auth_identity_mismatch() {
        let commit_i = Event::CommitI { tid: t("~t#1"), u: t("$A"), v: t("$B"), sk: t("~k#1"), intended: t("$B") };
        let tr = trace(vec![
            commit_i.clone(),
            Event::CommitR { tid: t("~r#1"), u: t("$C"), v: t("$B"), sk: t("~k#1") },
        ]);
        let v = check_implicit_auth_for_i(&tr, Bounds::default()).unwrap();
        assert_eq!((v.result, v.witness), (Outcome::Fail, vec![0, 1]));
        let mut excused = tr.clone();
        excused.push(TraceEvent { i: 2, event: Event::LtkRev { who: t("$A") } });
        assert!(check_implicit_auth_for_i(&excused, Bounds::default()).unwrap().passed());
        let mut sk_rev = tr;
        sk_rev.push(TraceEvent { i: 2, event: Event::SkRev { tid: t("~r#1"), sk: t("~k#1") } });
        assert!(!check_implicit_auth_for_i(&sk_rev, Bounds::default()).unwrap().passed());
    }

    #[test]
    fn implicit_auth_leak_excused_by_sk_reveal() {
        let commit_i = Event::CommitI { tid: t("~t#1"), u: t("$A"), v: t("$B"), sk: t("~k#1"), intended: t("$B") };
        let commit_r = Event::CommitR { tid: t("~r#1"), u: t("$A"), v: t("$B"), sk: t("~k#1") };
        let know = Event::AttackerKnows { term: Some(t("~k#1")), msg: None, bytes: None };
        let leaked = trace(vec![commit_i.clone(), commit_r.clone(), know.clone()]);
        assert!(!check_implicit_auth_for_i(&leaked, Bounds::default()).unwrap().passed());
        let other = Event::SkRev { tid: t("~r#2"), sk: t("~k#2") };
        let wrong = trace(vec![commit_i.clone(), commit_r.clone(), other, know.clone()]);
        assert!(!check_implicit_auth_for_i(&wrong, Bounds::default()).unwrap().passed());
        let rev = Event::SkRev { tid: t("~r#1"), sk: t("~k#1") };
        let excused = trace(vec![commit_i, commit_r, rev, know]);
        assert!(check_implicit_auth_for_i(&excused, Bounds::default()).unwrap().passed());
    }

    #[test]
    fn leaked_key_fails_secrecy_unless_revealed() {
        let commit = Event::CommitR { tid: t("~r#1"), u: t("$A"), v: t("$B"), sk: t("~k#1") };
        let know = Event::AttackerKnows { term: Some(t("~k#1")), msg: None, bytes: None };
        let tr = trace(vec![commit.clone(), know.clone()]);
        let v = check_secrecy_pfs(&tr, Bounds::default()).unwrap();
        assert_eq!((v.result, v.witness), (Outcome::Fail, vec![1, 0]));
        let revealed = trace(vec![commit, Event::SkRev { tid: t("~r#1"), sk: t("~k#1") }, know]);
        assert!(check_secrecy_pfs(&revealed, Bounds::default()).unwrap().passed());
    }

    #[test]
    fn honest_traces_pass_core() {
        for pair in MethodPair::ALL {
            let tr = honest(pair);
            for v in check_all(&tr, &Lemma::CORE, Bounds::default()).unwrap() {
                assert!(v.passed(), "{pair}: {v}");
            }
        }
    }

    #[test]
    fn imp_sk_gap_for_stat_initiators() {
        for pair in MethodPair::ALL {
            let v = check_inj_agreement_for_i_imp_sk(&honest(pair), Bounds::default()).unwrap();
            let stat_i = pair.initiator == crate::roles::AuthMethod::Stat;
            assert_eq!(v.passed(), !stat_i, "{pair}");
        }
    }

    #[test]
    fn bad_indices_rejected() {
        let tr = vec![TraceEvent { i: 5, event: Event::I3 { tid: t("~t#1") } }];
        assert!(Checker::new(&tr, Bounds::default()).is_err());
    }

    #[test]
    fn verdict_json() {
        let v = check_all(&[], &[Lemma::SecrecyPfs], Bounds::default()).unwrap().remove(0);
        assert_eq!(
            v.to_json(),
            r#"{"lemma":"secrecyPFSGIYSessionKey","result":"Pass","bounds":{"max_sessions":3,"max_steps":40,"depth":4},"witness":[]}"#
        );
    }
}
