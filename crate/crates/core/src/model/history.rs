//! Local and environment histories, global states, runs and the state
//! update functions.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::hap::{GlobalHap, Hap, Name, StateId};
use crate::agent::{AgentId, AgentSet};
use crate::error::{Error, Result};
use crate::syntax::Cursor;

pub type LocalRound = BTreeSet<Hap>;
pub type GlobalRound = BTreeSet<GlobalHap>;

/// An agent's local history: its initial state followed by one round set per
/// round in which the agent was active. Rounds are kept oldest first.
///
/// An empty round is an activation marker: the agent was scheduled but
/// neither performed nor perceived anything. Markers count as rounds but
/// contain no haps.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalHistory {
    initial: StateId,
    rounds: Vec<Arc<LocalRound>>,
}

impl LocalHistory {
    pub fn new(initial: StateId) -> Self {
        LocalHistory {
            initial,
            rounds: Vec::new(),
        }
    }

    pub fn from_rounds(initial: StateId, rounds: impl IntoIterator<Item = LocalRound>) -> Self {
        LocalHistory {
            initial,
            rounds: rounds.into_iter().map(Arc::new).collect(),
        }
    }

    pub fn initial(&self) -> &StateId {
        &self.initial
    }

    /// Number of recorded rounds, markers included.
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    /// The `k`-th recorded round, counting from 0 at the oldest.
    pub fn round(&self, k: usize) -> Option<&LocalRound> {
        self.rounds.get(k).map(|r| &**r)
    }

    pub fn latest(&self) -> Option<&LocalRound> {
        self.rounds.last().map(|r| &**r)
    }

    /// Rounds oldest first.
    pub fn rounds(&self) -> impl DoubleEndedIterator<Item = &LocalRound> + ExactSizeIterator {
        self.rounds.iter().map(|r| &**r)
    }

    pub fn haps(&self) -> impl Iterator<Item = &Hap> {
        self.rounds().flatten()
    }

    /// `o ∈ h`: whether the hap appears in some round.
    pub fn contains(&self, hap: &Hap) -> bool {
        self.rounds().any(|r| r.contains(hap))
    }

    /// The history consisting of the oldest `m` rounds.
    pub fn prefix(&self, m: usize) -> LocalHistory {
        LocalHistory {
            initial: self.initial.clone(),
            rounds: self.rounds[..m.min(self.rounds.len())].to_vec(),
        }
    }

    pub fn is_prefix_of(&self, other: &LocalHistory) -> bool {
        self.initial == other.initial
            && self.rounds.len() <= other.rounds.len()
            && self.rounds.iter().zip(&other.rounds).all(|(a, b)| a == b)
    }

    /// The most recent `k` rounds, oldest first.
    pub fn last_rounds(&self, k: usize) -> impl Iterator<Item = &LocalRound> {
        let skip = self.rounds.len().saturating_sub(k);
        self.rounds[skip..].iter().map(|r| &**r)
    }

    pub fn push(&mut self, round: LocalRound) {
        self.rounds.push(Arc::new(round));
    }

    /// Reconstructs agent `agent`'s history from the environment history.
    pub fn replay(initial: StateId, env: &EnvHistory, agent: AgentId) -> LocalHistory {
        let mut h = LocalHistory::new(initial);
        for round in env.rounds() {
            let (actions, events) = split_round(round, agent);
            h = update_agent(&h, agent, &actions, &events);
        }
        h
    }
}

fn split_round(round: &GlobalRound, agent: AgentId) -> (GlobalRound, GlobalRound) {
    let mut actions = GlobalRound::new();
    let mut events = GlobalRound::new();
    for g in round {
        match g {
            GlobalHap::Action(a) if a.agent() == agent => {
                actions.insert(g.clone());
            }
            GlobalHap::Action(_) => {}
            _ => {
                events.insert(g.clone());
            }
        }
    }
    (actions, events)
}

fn write_round<T: fmt::Display>(f: &mut fmt::Formatter<'_>, round: &BTreeSet<T>) -> fmt::Result {
    f.write_str("{")?;
    for (k, h) in round.iter().enumerate() {
        if k > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{h}")?;
    }
    f.write_str("}")
}

/// Text form: `s0; {send(2,m)}; {}; {ext(e), recv(1,m)}`.
impl fmt::Display for LocalHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.initial)?;
        for r in self.rounds() {
            f.write_str("; ")?;
            write_round(f, r)?;
        }
        Ok(())
    }
}

impl fmt::Debug for LocalHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LocalHistory({self})")
    }
}

impl FromStr for LocalHistory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut c = Cursor::new(s, "local history");
        let mut h = LocalHistory::new(Name::new(c.ident()?));
        while c.eat(";") {
            c.expect("{")?;
            let mut round = LocalRound::new();
            if !c.eat("}") {
                loop {
                    round.insert(super::hap::parse_local(&mut c)?);
                    if c.eat("}") {
                        break;
                    }
                    c.expect(",")?;
                }
            }
            h.push(round);
        }
        c.finish()?;
        Ok(h)
    }
}

impl Serialize for LocalHistory {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LocalHistory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// The environment's history: every hap of every round in global format.
/// Round `t` is the round between timestamps `t` and `t+1`.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct EnvHistory {
    rounds: Vec<Arc<GlobalRound>>,
}

impl EnvHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn round(&self, t: usize) -> Option<&GlobalRound> {
        self.rounds.get(t).map(|r| &**r)
    }

    pub fn rounds(&self) -> impl DoubleEndedIterator<Item = &GlobalRound> + ExactSizeIterator {
        self.rounds.iter().map(|r| &**r)
    }

    /// Haps of the first `t` rounds, i.e. of the history at timestamp `t`.
    pub fn haps_until(&self, t: usize) -> impl Iterator<Item = &GlobalHap> {
        self.rounds[..t.min(self.rounds.len())].iter().flat_map(|r| r.iter())
    }

    pub fn contains(&self, hap: &GlobalHap) -> bool {
        self.rounds().any(|r| r.contains(hap))
    }

    pub fn push(&mut self, round: GlobalRound) {
        self.rounds.push(Arc::new(round));
    }

    pub fn prefix(&self, t: usize) -> EnvHistory {
        EnvHistory {
            rounds: self.rounds[..t.min(self.rounds.len())].to_vec(),
        }
    }
}

impl fmt::Debug for EnvHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rounds()).finish()
    }
}

/// The agent's history is unchanged when it perceives nothing and
/// is not activated; otherwise the localized round is appended.
///
/// `actions` are the agent's filtered actions, `events` the filtered round
/// events (for all agents; only the agent's own are looked at).
pub fn update_agent(h: &LocalHistory, agent: AgentId, actions: &GlobalRound, events: &GlobalRound) -> LocalHistory {
    let mut perceived = LocalRound::new();
    let mut go = false;
    for e in events.iter().filter(|e| e.owner() == agent) {
        if *e == GlobalHap::Go(agent) {
            go = true;
        }
        if let Some(l) = e.localize() {
            perceived.insert(l);
        }
    }
    if perceived.is_empty() && !go {
        return h.clone();
    }
    perceived.extend(actions.iter().filter_map(GlobalHap::localize));
    let mut next = h.clone();
    next.push(perceived);
    next
}

/// The environment records the union of everything that passed the
/// filters.
pub fn update_env(h: &EnvHistory, events: &GlobalRound, actions: &[GlobalRound]) -> EnvHistory {
    let mut round = events.clone();
    for a in actions {
        round.extend(a.iter().cloned());
    }
    let mut next = h.clone();
    next.push(round);
    next
}

/// `(r_ε(t), r_1(t), …, r_n(t))` plus the set of agents that are faulty at
/// this point (derivable from `env`, cached).
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct GlobalState {
    pub env: EnvHistory,
    pub locals: Vec<LocalHistory>,
    pub faulty: AgentSet,
}

impl GlobalState {
    pub fn initial(locals: Vec<LocalHistory>) -> Self {
        GlobalState {
            env: EnvHistory::new(),
            locals,
            faulty: AgentSet::EMPTY,
        }
    }

    pub fn n(&self) -> usize {
        self.locals.len()
    }

    pub fn time(&self) -> usize {
        self.env.len()
    }

    pub fn local(&self, i: AgentId) -> &LocalHistory {
        &self.locals[i.slot()]
    }

    /// Appends the filtered round to every local history.
    pub fn update(&self, events: &GlobalRound, actions: &[GlobalRound]) -> GlobalState {
        let locals = self
            .locals
            .iter()
            .enumerate()
            .map(|(k, h)| update_agent(h, AgentId::new(k + 1), &actions[k], events))
            .collect();
        let mut faulty = self.faulty;
        for e in events.iter().filter(|e| e.is_fault()) {
            faulty.insert(e.owner());
        }
        GlobalState {
            env: update_env(&self.env, events, actions),
            locals,
            faulty,
        }
    }
}

/// A run prefix `r(0), …, r(horizon)`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Run {
    pub states: Vec<Arc<GlobalState>>,
}

impl Run {
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn at(&self, t: usize) -> &GlobalState {
        &self.states[t]
    }

    pub fn last(&self) -> &GlobalState {
        self.states.last().expect("run has at least one state")
    }

    pub fn n(&self) -> usize {
        self.states[0].n()
    }

    /// The environment history of the final state, which contains every round.
    pub fn env(&self) -> &EnvHistory {
        &self.last().env
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::hap::{make_gmi, GlobalAction};

    fn a(i: usize) -> AgentId {
        AgentId::new(i)
    }

    fn set<T: Ord>(xs: impl IntoIterator<Item = T>) -> BTreeSet<T> {
        xs.into_iter().collect()
    }

    #[test]
    fn no_perception_no_go_leaves_history() {
        let h = LocalHistory::new(Name::new("s0"));
        assert_eq!(update_agent(&h, a(1), &set([]), &set([])), h);
        assert_eq!(update_agent(&h, a(1), &set([]), &set([GlobalHap::Sleep(a(1))])), h);
        // another agent's activation is invisible
        assert_eq!(update_agent(&h, a(1), &set([]), &set([GlobalHap::Go(a(2))])), h);
    }

    #[test]
    fn go_without_haps_appends_marker() {
        let h = LocalHistory::new(Name::new("s0"));
        let h2 = update_agent(&h, a(1), &set([]), &set([GlobalHap::Go(a(1))]));
        assert_eq!(h2.len(), 1);
        assert!(h2.latest().unwrap().is_empty());
        assert_eq!(h2.to_string(), "s0; {}");
    }

    #[test]
    fn delivery_and_actions_share_a_round() {
        let g = make_gmi(a(1), a(2), Name::new("m"), 0, 0);
        let act = GlobalHap::Action(GlobalAction::Do {
            agent: a(2),
            action: Name::new("ack"),
        });
        let h = LocalHistory::new(Name::new("s0"));
        let h2 = update_agent(&h, a(2), &set([act]), &set([GlobalHap::Deliver(g), GlobalHap::Go(a(2))]));
        assert_eq!(h2.to_string(), "s0; {do(ack), recv(1,m)}");
        assert!(h2.contains(&Hap::recv(a(1), "m")));
    }

    #[test]
    fn env_update_keeps_system_events() {
        let e = update_env(&EnvHistory::new(), &set([GlobalHap::Go(a(1))]), &[set([]), set([])]);
        assert_eq!(e.len(), 1);
        assert!(e.contains(&GlobalHap::Go(a(1))));
        let e2 = update_env(&e, &set([]), &[set([]), set([])]);
        assert_eq!(e2.len(), 2);
        assert!(e2.round(1).unwrap().is_empty());
    }

    #[test]
    fn history_text_round_trip_and_prefix() {
        let s = "s0; {send(2,m)}; {}; {recv(1,m), ext(e)}";
        let h: LocalHistory = s.parse().unwrap();
        assert_eq!(h.to_string(), s);
        assert_eq!(h.len(), 3);
        assert!(h.prefix(1).is_prefix_of(&h));
        assert!(!h.is_prefix_of(&h.prefix(2)));
        assert_eq!(h.last_rounds(2).count(), 2);
        assert_eq!("s0".parse::<LocalHistory>().unwrap().len(), 0);
    }
}
