//! Agent and environment protocols as finite tables.

use std::collections::BTreeSet;

use serde::{Deserialize, Deserializer, Serialize};

use crate::agent::AgentId;
use crate::detection;
use crate::epistemics::Formula;
use crate::error::{Error, Result};
use crate::hopechain::{TrustEntry, TrustTable};
use crate::model::{GlobalRound, Hap, LocalHistory, Name, StateId};

/// A set of local actions.
pub type ActionSet = BTreeSet<Hap>;

/// Reads an action list, numbering repeated sends `0, 1, 2, …`.
pub fn number_copies(list: Vec<Hap>) -> ActionSet {
    let mut out = ActionSet::new();
    for h in list {
        match h {
            Hap::Send { to, msg, copy: 0 } => {
                let mut copy = 0;
                while out.contains(&Hap::Send {
                    to,
                    msg: msg.clone(),
                    copy,
                }) {
                    copy += 1;
                }
                out.insert(Hap::Send { to, msg, copy });
            }
            other => {
                out.insert(other);
            }
        }
    }
    out
}

fn de_offer<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<ActionSet>, D::Error> {
    let raw = Vec::<Vec<Hap>>::deserialize(d)?;
    for set in &raw {
        if let Some(h) = set.iter().find(|h| !h.is_action()) {
            return Err(serde::de::Error::custom(format!("`{h}` is not an action")));
        }
    }
    if raw.is_empty() {
        return Err(serde::de::Error::custom("an offer must list at least one action set"));
    }
    Ok(raw.into_iter().map(number_copies).collect())
}

/// Guard of a protocol rule, evaluated on the agent's local history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Condition {
    Always,
    Has(Hap),
    Lacks(Hap),
    Init(StateId),
    /// Number of recorded rounds within `[min, max]`.
    Rounds {
        #[serde(default)]
        min: Option<usize>,
        #[serde(default)]
        max: Option<usize>,
    },
    /// The keyed view equals this history exactly.
    History(LocalHistory),
    All(Vec<Condition>),
    Any(Vec<Condition>),
    Not(Box<Condition>),
    /// The agent's own history contradicts its protocol.
    SelfFaulty,
    /// The fault-belief algorithm puts this agent into the agent's `F`.
    BelievesFaulty(AgentId),
    /// The group occurrence test succeeds for `hap` with group size `k`.
    BelievesOccurred { hap: Hap, k: usize },
}

/// Which part of the history the rules look at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryKey {
    #[default]
    Full,
    /// Only the most recent `k` rounds (and the initial state).
    Last(usize),
}

impl HistoryKey {
    pub fn view(self, h: &LocalHistory) -> LocalHistory {
        match self {
            HistoryKey::Full => h.clone(),
            HistoryKey::Last(k) => LocalHistory::from_rounds(h.initial().clone(), h.last_rounds(k).cloned()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub when: Condition,
    #[serde(deserialize_with = "de_offer")]
    pub offer: Vec<ActionSet>,
}

fn default_offer() -> Vec<ActionSet> {
    vec![ActionSet::new()]
}

/// First matching rule wins; `default` applies when none matches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentProtocol {
    #[serde(default)]
    pub key: HistoryKey,
    #[serde(default)]
    pub rules: Vec<Rule>,
    #[serde(default = "default_offer", deserialize_with = "de_offer")]
    pub default: Vec<ActionSet>,
}

impl Default for AgentProtocol {
    fn default() -> Self {
        AgentProtocol {
            key: HistoryKey::Full,
            rules: Vec::new(),
            default: default_offer(),
        }
    }
}

/// Relay template: agent `agent` forwards every trustworthy receipt about
/// `formula` to each target once, extending the carried chain, and
/// optionally originates a message when `origin` holds.
///
/// Message names: `prefix` for originated messages, `prefix.a.b…` for a
/// relayed chain `(a, b, …)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelayFamily {
    pub agent: AgentId,
    pub formula: Formula,
    pub prefix: Name,
    pub to: Vec<AgentId>,
    /// Longest chain a receiver may extract from this family.
    pub max_len: usize,
    pub origin: Option<Condition>,
}

impl RelayFamily {
    pub fn message_for(&self, carried: &[AgentId]) -> Name {
        let mut s = self.prefix.as_str().to_string();
        for a in carried {
            s.push('.');
            s.push_str(&a.to_string());
        }
        Name::new(&s)
    }

    fn carried_chains(&self, n: usize) -> Vec<Vec<AgentId>> {
        let mut out = Vec::new();
        if self.origin.is_some() {
            out.push(Vec::new());
        }
        let mut frontier: Vec<Vec<AgentId>> = vec![Vec::new()];
        for _ in 1..self.max_len {
            let mut next = Vec::new();
            for s in &frontier {
                for a in AgentId::all(n) {
                    let mut s2 = s.clone();
                    s2.push(a);
                    next.push(s2);
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }
}

/// The joint protocol with everything needed to evaluate it: relay
/// templates, the trust table (with relay entries added) and the fault
/// bound used by detection-based guards.
#[derive(Clone, Debug)]
pub struct JointProtocol {
    agents: Vec<AgentProtocol>,
    relays: Vec<RelayFamily>,
    trust: TrustTable,
    f: usize,
    emittable: Vec<ActionSet>,
}

impl JointProtocol {
    pub fn new(agents: Vec<AgentProtocol>, relays: Vec<RelayFamily>, mut trust: TrustTable, f: usize) -> Result<Self> {
        let n = agents.len();
        let mut emittable = vec![ActionSet::new(); n];
        for (k, p) in agents.iter().enumerate() {
            for set in p.rules.iter().flat_map(|r| r.offer.iter()).chain(p.default.iter()) {
                emittable[k].extend(set.iter().cloned());
            }
        }
        for fam in &relays {
            if fam.agent.index() > n || fam.to.iter().any(|t| t.index() > n) {
                return Err(Error::Precondition(format!("relay of agent {} names unknown agents", fam.agent)));
            }
            for carried in fam.carried_chains(n) {
                let msg = fam.message_for(&carried);
                for &to in fam.to.iter().filter(|&&t| t != fam.agent) {
                    trust.insert(
                        fam.agent,
                        to,
                        msg.clone(),
                        TrustEntry {
                            formula: fam.formula.clone(),
                            chain: carried.clone(),
                        },
                    )?;
                    emittable[fam.agent.slot()].insert(Hap::Send {
                        to,
                        msg: msg.clone(),
                        copy: 0,
                    });
                }
            }
        }
        Ok(JointProtocol {
            agents,
            relays,
            trust,
            f,
            emittable,
        })
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn trust(&self) -> &TrustTable {
        &self.trust
    }

    pub fn agent(&self, i: AgentId) -> &AgentProtocol {
        &self.agents[i.slot()]
    }

    pub fn relays(&self) -> &[RelayFamily] {
        &self.relays
    }

    /// Every action that agent `i`'s protocol offers under some history.
    pub fn emittable(&self, i: AgentId) -> &ActionSet {
        &self.emittable[i.slot()]
    }

    /// `P_i(h)`: the non-empty range of action sets for agent `i`.
    pub fn offers(&self, i: AgentId, h: &LocalHistory) -> Result<Vec<ActionSet>> {
        let p = self.agent(i);
        let view = p.key.view(h);
        let mut base = &p.default;
        for rule in &p.rules {
            if self.holds(i, &rule.when, &view, h)? {
                base = &rule.offer;
                break;
            }
        }
        let extra = self.relay_actions(i, h)?;
        let out: BTreeSet<ActionSet> = base
            .iter()
            .map(|d| d.iter().chain(extra.iter()).cloned().collect())
            .collect();
        Ok(out.into_iter().collect())
    }

    fn relay_actions(&self, i: AgentId, h: &LocalHistory) -> Result<ActionSet> {
        let mut out = ActionSet::new();
        for fam in self.relays.iter().filter(|f| f.agent == i) {
            let mut carried: BTreeSet<Vec<AgentId>> = BTreeSet::new();
            if let Some(c) = &fam.origin {
                if self.holds(i, c, h, h)? {
                    carried.insert(Vec::new());
                }
            }
            for hap in h.haps() {
                if let Hap::Recv { from, msg } = hap {
                    if let Some(e) = self.trust.get(*from, i, msg) {
                        if e.formula == fam.formula && e.chain.len() + 2 <= fam.max_len {
                            let mut c = vec![*from];
                            c.extend_from_slice(&e.chain);
                            carried.insert(c);
                        }
                    }
                }
            }
            for c in carried {
                let msg = fam.message_for(&c);
                for &to in fam.to.iter().filter(|&&t| t != i) {
                    let send = Hap::Send {
                        to,
                        msg: msg.clone(),
                        copy: 0,
                    };
                    if !h.contains(&send) {
                        out.insert(send);
                    }
                }
            }
        }
        Ok(out)
    }

    fn holds(&self, i: AgentId, c: &Condition, view: &LocalHistory, full: &LocalHistory) -> Result<bool> {
        Ok(match c {
            Condition::Always => true,
            Condition::Has(o) => view.contains(o),
            Condition::Lacks(o) => !view.contains(o),
            Condition::Init(s) => view.initial() == s,
            Condition::Rounds { min, max } => {
                min.is_none_or(|m| view.len() >= m) && max.is_none_or(|m| view.len() <= m)
            }
            Condition::History(h) => view == h,
            Condition::All(cs) => {
                for c in cs {
                    if !self.holds(i, c, view, full)? {
                        return Ok(false);
                    }
                }
                true
            }
            Condition::Any(cs) => {
                for c in cs {
                    if self.holds(i, c, view, full)? {
                        return Ok(true);
                    }
                }
                false
            }
            Condition::Not(c) => !self.holds(i, c, view, full)?,
            Condition::SelfFaulty => detection::self_check_faulty(full, i, self)?,
            Condition::BelievesFaulty(l) => {
                detection::belief_who_is_faulty(&detection::DetectionInput::new(full, i, self))?
                    .faulty
                    .contains(*l)
            }
            Condition::BelievesOccurred { hap, k } => {
                let input = detection::DetectionInput::new(full, i, self);
                let report = detection::belief_who_is_faulty(&input)?;
                if report.faulty.len() > self.f || k + self.f > self.n() {
                    false
                } else {
                    detection::group_occurrence_belief(&input, hap, *k, report.faulty, false)?
                }
            }
        })
    }
}

/// The environment's menus: for each round `t < horizon` a non-empty list of
/// event sets, in canonical order. Later rounds offer only the empty set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnvProtocol {
    rounds: Vec<Vec<GlobalRound>>,
}

fn canonical_text(set: &GlobalRound) -> String {
    let parts: Vec<String> = set.iter().map(|h| h.to_string()).collect();
    format!("{{{}}}", parts.join(", "))
}

impl EnvProtocol {
    /// Deduplicates each menu and sorts it by canonical text.
    pub fn new(rounds: Vec<Vec<GlobalRound>>) -> Result<Self> {
        let mut out = Vec::with_capacity(rounds.len());
        for (t, menu) in rounds.into_iter().enumerate() {
            if menu.is_empty() {
                return Err(Error::Precondition(format!("environment menu for round {t} is empty")));
            }
            let mut keyed: Vec<(String, GlobalRound)> = menu.into_iter().map(|s| (canonical_text(&s), s)).collect();
            keyed.sort_by(|a, b| a.0.cmp(&b.0));
            keyed.dedup_by(|a, b| a.0 == b.0);
            out.push(keyed.into_iter().map(|(_, s)| s).collect());
        }
        Ok(EnvProtocol { rounds: out })
    }

    pub fn menu(&self, t: usize) -> &[GlobalRound] {
        static QUIET: std::sync::OnceLock<Vec<GlobalRound>> = std::sync::OnceLock::new();
        self.rounds
            .get(t)
            .map(|v| v.as_slice())
            .unwrap_or_else(|| QUIET.get_or_init(|| vec![GlobalRound::new()]))
    }

    /// Number of rounds with explicit menus.
    pub fn explicit_rounds(&self) -> usize {
        self.rounds.len()
    }

    /// First round from which on only the empty set is offered.
    pub fn quiescent_from(&self) -> usize {
        let mut t = self.rounds.len();
        while t > 0 && self.rounds[t - 1].len() == 1 && self.rounds[t - 1][0].is_empty() {
            t -= 1;
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(i: usize) -> AgentId {
        AgentId::new(i)
    }

    fn h(s: &str) -> LocalHistory {
        s.parse().unwrap()
    }

    #[test]
    fn copies_are_numbered() {
        let s = number_copies(vec![Hap::send(a(2), "m"), Hap::send(a(2), "m"), Hap::send(a(3), "m")]);
        let txt: Vec<String> = s.iter().map(|x| x.to_string()).collect();
        assert_eq!(txt, vec!["send(2,m)", "send(2,m,1)", "send(3,m)"]);
    }

    #[test]
    fn first_match_and_default() {
        let p: AgentProtocol = serde_json::from_str(
            r#"{"rules": [
                {"when": {"has": "recv(2,m)"}, "offer": [["send(2,ack)"]]},
                {"when": "always", "offer": [[], ["do(x)"]]}
            ]}"#,
        )
        .unwrap();
        let joint = JointProtocol::new(vec![p, AgentProtocol::default()], vec![], TrustTable::new(), 0).unwrap();
        assert_eq!(joint.offers(a(1), &h("s0; {recv(2,m)}")).unwrap().len(), 1);
        assert_eq!(joint.offers(a(1), &h("s0")).unwrap().len(), 2);
        assert_eq!(joint.offers(a(2), &h("s0")).unwrap(), vec![ActionSet::new()]);
        assert!(joint.emittable(a(1)).contains(&Hap::send(a(2), "ack")));
    }

    #[test]
    fn last_k_key() {
        let p: AgentProtocol = serde_json::from_str(
            r#"{"key": {"last": 1}, "rules": [{"when": {"has": "recv(2,m)"}, "offer": [["do(y)"]]}]}"#,
        )
        .unwrap();
        let joint = JointProtocol::new(vec![p, AgentProtocol::default()], vec![], TrustTable::new(), 0).unwrap();
        assert_eq!(joint.offers(a(1), &h("s0; {recv(2,m)}")).unwrap()[0].len(), 1);
        assert_eq!(joint.offers(a(1), &h("s0; {recv(2,m)}; {}")).unwrap()[0].len(), 0);
    }

    #[test]
    fn rejects_events_in_offers() {
        let r: std::result::Result<AgentProtocol, _> =
            serde_json::from_str(r#"{"default": [["recv(1,m)"]]}"#);
        assert!(r.is_err());
    }

    #[test]
    fn relay_family() {
        let phi = Formula::parse("occ_c(ext(o))").unwrap();
        let fam = |agent: usize, to: &[usize], origin: Option<Condition>| RelayFamily {
            agent: a(agent),
            formula: phi.clone(),
            prefix: Name::new("w"),
            to: to.iter().map(|&i| a(i)).collect(),
            max_len: 2,
            origin,
        };
        let joint = JointProtocol::new(
            vec![AgentProtocol::default(); 3],
            vec![
                fam(3, &[2], Some(Condition::Has("ext(o)".parse().unwrap()))),
                fam(2, &[1], None),
            ],
            TrustTable::new(),
            1,
        )
        .unwrap();
        // origin fires once
        let o3 = joint.offers(a(3), &h("s0; {ext(o)}")).unwrap();
        assert_eq!(o3, vec![[Hap::send(a(2), "w")].into_iter().collect()]);
        assert_eq!(joint.offers(a(3), &h("s0; {ext(o)}; {send(2,w)}")).unwrap(), vec![ActionSet::new()]);
        // relay extends the chain
        let o2 = joint.offers(a(2), &h("s0; {recv(3,w)}")).unwrap();
        assert_eq!(o2, vec![[Hap::send(a(1), "w.3")].into_iter().collect()]);
        let e = joint.trust().get(a(2), a(1), &Name::new("w.3")).unwrap();
        assert_eq!(e.chain, vec![a(3)]);
        // chains at the receiver are capped at max_len
        assert_eq!(joint.offers(a(2), &h("s0; {recv(3,w.1)}")).unwrap(), vec![ActionSet::new()]);
    }

    #[test]
    fn env_menus_sorted_and_quiescence() {
        let s = |xs: &[&str]| -> GlobalRound { xs.iter().map(|x| x.parse().unwrap()).collect() };
        let e = EnvProtocol::new(vec![vec![s(&["go(2)"]), s(&["go(1)"]), s(&["go(1)"])], vec![s(&[])]]).unwrap();
        assert_eq!(e.menu(0).len(), 2);
        assert_eq!(e.menu(0)[0], s(&["go(1)"]));
        assert_eq!(e.quiescent_from(), 1);
        assert_eq!(e.menu(7), &[GlobalRound::new()]);
        assert!(EnvProtocol::new(vec![vec![]]).is_err());
    }
}
