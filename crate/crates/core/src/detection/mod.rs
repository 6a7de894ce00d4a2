//! Local fault detection: direct observation, direct notification, self
//! checks, the fixpoint over hope-chain thresholds, local knowledge and the
//! group occurrence test.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentId, AgentSet};
use crate::engine::JointProtocol;
use crate::epistemics::Formula;
use crate::error::{Error, Result};
use crate::hopechain::{
    chains_minus, extract_chains, max_disjoint, pairwise_disjoint, HopeChain, TrustTable, DEFAULT_CHAIN_CAP,
};
use crate::model::{DesignatedAtom, Hap, LocalHistory, StateId};

/// Everything agent `agent` uses to reason about faults at one point.
#[derive(Clone, Debug)]
pub struct DetectionInput<'a> {
    pub history: &'a LocalHistory,
    pub agent: AgentId,
    pub joint: &'a JointProtocol,
    /// Order in which candidates are tried by the fixpoint; ascending ids
    /// when unset.
    pub order: Option<Vec<AgentId>>,
}

impl<'a> DetectionInput<'a> {
    pub fn new(history: &'a LocalHistory, agent: AgentId, joint: &'a JointProtocol) -> Self {
        DetectionInput {
            history,
            agent,
            joint,
            order: None,
        }
    }

    pub fn with_order(mut self, order: Vec<AgentId>) -> Self {
        self.order = Some(order);
        self
    }

    pub fn n(&self) -> usize {
        self.joint.n()
    }

    pub fn f(&self) -> usize {
        self.joint.f()
    }

    pub fn trust(&self) -> &TrustTable {
        self.joint.trust()
    }
}

/// Why an agent was put into `F`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// A received message the sender's protocol can never emit.
    DirectObservation { hap: Hap },
    /// A trust-tagged report from the agent about its own fault.
    DirectNotification { hap: Hap },
    /// Round `round` of the own history holds `action`, which the protocol
    /// did not offer at that prefix.
    SelfDetection { round: usize, action: Hap },
    /// Disjoint chains about the agent's fault, avoiding the agents believed
    /// faulty when it was added.
    ChainThreshold {
        witness: Vec<HopeChain>,
        believed_before: AgentSet,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeliefReport {
    pub faulty: AgentSet,
    pub provenance: BTreeMap<AgentId, Provenance>,
    /// Passes of the outer loop, including the final one that adds nothing.
    pub iterations: usize,
}

/// A received message from `j` that no history of `j`'s protocol could
/// produce, for each such `j`.
fn observed(h: &LocalHistory, i: AgentId, joint: &JointProtocol) -> BTreeMap<AgentId, Hap> {
    let mut out = BTreeMap::new();
    for hap in h.haps() {
        if let Hap::Recv { from, msg } = hap {
            if from.index() > joint.n() || out.contains_key(from) {
                continue;
            }
            let emittable = joint
                .emittable(*from)
                .iter()
                .any(|a| matches!(a, Hap::Send { to, msg: m, .. } if *to == i && m == msg));
            if !emittable {
                out.insert(*from, hap.clone());
            }
        }
    }
    out
}

/// Senders of messages their protocol never emits to `i`.
pub fn dir_obs_faulty(h: &LocalHistory, i: AgentId, joint: &JointProtocol) -> AgentSet {
    observed(h, i, joint).into_keys().collect()
}

fn notified(h: &LocalHistory, i: AgentId, trust: &TrustTable) -> BTreeMap<AgentId, Hap> {
    let mut out = BTreeMap::new();
    for hap in h.haps() {
        if let Hap::Recv { from, msg } = hap {
            if let Some(e) = trust.get(*from, i, msg) {
                if e.chain.is_empty() && e.formula == Formula::faulty(*from) {
                    out.entry(*from).or_insert_with(|| hap.clone());
                }
            }
        }
    }
    out
}

/// Agents `j` with the singleton chain `(j)` for `faulty(j)`.
pub fn dir_notif_faulty(h: &LocalHistory, i: AgentId, trust: &TrustTable) -> AgentSet {
    notified(h, i, trust).into_keys().collect()
}

fn self_violation(h: &LocalHistory, i: AgentId, joint: &JointProtocol) -> Result<Option<(usize, Hap)>> {
    for (m, round) in h.rounds().enumerate() {
        let actions: Vec<&Hap> = round.iter().filter(|a| a.is_action()).collect();
        if actions.is_empty() {
            continue;
        }
        let offers = joint.offers(i, &h.prefix(m))?;
        if let Some(a) = actions.into_iter().find(|a| !offers.iter().any(|d| d.contains(*a))) {
            return Ok(Some((m, a.clone())));
        }
    }
    Ok(None)
}

/// Whether some recorded action was not offered by `i`'s protocol at the
/// prefix preceding its round.
pub fn self_check_faulty(h: &LocalHistory, i: AgentId, joint: &JointProtocol) -> Result<bool> {
    Ok(self_violation(h, i, joint)?.is_some())
}

/// Fixpoint computation of the agents `i` believes to be faulty.
pub fn belief_who_is_faulty(input: &DetectionInput<'_>) -> Result<BeliefReport> {
    let (h, i, f) = (input.history, input.agent, input.f());
    let mut provenance = BTreeMap::new();
    for (j, hap) in observed(h, i, input.joint) {
        provenance.insert(j, Provenance::DirectObservation { hap });
    }
    for (j, hap) in notified(h, i, input.trust()) {
        provenance
            .entry(j)
            .or_insert(Provenance::DirectNotification { hap });
    }
    if let Some((round, action)) = self_violation(h, i, input.joint)? {
        provenance
            .entry(i)
            .or_insert(Provenance::SelfDetection { round, action });
    }
    let mut faulty: AgentSet = provenance.keys().copied().collect();

    let order = input.order.clone().unwrap_or_else(|| AgentId::all(input.n()).collect());
    let chains: Vec<_> = order
        .iter()
        .map(|&l| extract_chains(h, i, &Formula::faulty(l), input.trust()))
        .collect();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut grew = false;
        for (&l, sigma) in order.iter().zip(&chains) {
            if faulty.contains(l) {
                continue;
            }
            let p = max_disjoint(&chains_minus(sigma, faulty), DEFAULT_CHAIN_CAP)?;
            // |F| may exceed f at faulty points
            if p.size as i64 > f as i64 - faulty.len() as i64 {
                provenance.insert(
                    l,
                    Provenance::ChainThreshold {
                        witness: p.witness,
                        believed_before: faulty,
                    },
                );
                faulty.insert(l);
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    Ok(BeliefReport {
        faulty,
        provenance,
        iterations,
    })
}

impl BeliefReport {
    /// Re-checks every provenance entry against the input, independently of
    /// the fixpoint loop.
    pub fn revalidate(&self, input: &DetectionInput<'_>) -> Result<bool> {
        let (h, i, f) = (input.history, input.agent, input.f() as i64);
        if self.provenance.keys().copied().collect::<AgentSet>() != self.faulty {
            return Ok(false);
        }
        for (&l, why) in &self.provenance {
            let ok = match why {
                Provenance::DirectObservation { hap } => {
                    matches!(hap, Hap::Recv { from, .. } if *from == l)
                        && h.contains(hap)
                        && !input.joint.emittable(l).iter().any(|a| match (a, hap) {
                            (Hap::Send { to, msg, .. }, Hap::Recv { msg: m, .. }) => *to == i && msg == m,
                            _ => false,
                        })
                }
                Provenance::DirectNotification { hap } => match hap {
                    Hap::Recv { from, msg } => {
                        *from == l
                            && h.contains(hap)
                            && input
                                .trust()
                                .get(l, i, msg)
                                .is_some_and(|e| e.chain.is_empty() && e.formula == Formula::faulty(l))
                    }
                    _ => false,
                },
                Provenance::SelfDetection { round, action } => {
                    l == i
                        && h.round(*round).is_some_and(|r| r.contains(action))
                        && !input
                            .joint
                            .offers(i, &h.prefix(*round))?
                            .iter()
                            .any(|d| d.contains(action))
                }
                Provenance::ChainThreshold {
                    witness,
                    believed_before,
                } => {
                    let chains = extract_chains(h, i, &Formula::faulty(l), input.trust());
                    believed_before.is_subset(self.faulty)
                        && !believed_before.contains(l)
                        && witness.iter().all(|c| chains.contains(c) && c.agent_set().is_disjoint(*believed_before))
                        && pairwise_disjoint(witness)
                        && witness.len() as i64 > f - believed_before.len() as i64
                }
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// What an agent can know from its own history alone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalQuery {
    Occurred(Hap),
    Init(StateId),
}

/// Whether the history itself certifies the query.
pub fn local_knowledge(h: &LocalHistory, query: &LocalQuery) -> bool {
    match query {
        LocalQuery::Occurred(o) => h.contains(o),
        LocalQuery::Init(s) => h.initial() == s,
    }
}

/// Whether enough disjoint chains support that some `k` reliable agents
/// believe `o` occurred correctly. `believed_faulty` is the set `F` the
/// agent already believes faulty.
///
/// With `include_self`, an agent that observed `o` itself counts as one of
/// the `k` when no supporting chain passes through it.
pub fn group_occurrence_belief(
    input: &DetectionInput<'_>,
    o: &Hap,
    k: usize,
    believed_faulty: AgentSet,
    include_self: bool,
) -> Result<bool> {
    let (h, i, n, f) = (input.history, input.agent, input.n(), input.f());
    if k == 0 {
        return Err(Error::Precondition("group size k must be at least 1".into()));
    }
    if k + f > n {
        return Err(Error::Precondition(format!("k + f = {} exceeds n = {n}", k + f)));
    }
    if believed_faulty.len() > f {
        return Err(Error::Precondition(format!(
            "|F| = {} exceeds f = {f}",
            believed_faulty.len()
        )));
    }
    let slack = f - believed_faulty.len();
    let occ = Formula::Atom(DesignatedAtom::OccCAny(o.clone()));
    let direct = chains_minus(&extract_chains(h, i, &occ, input.trust()), believed_faulty);
    if max_disjoint(&direct, DEFAULT_CHAIN_CAP)?.size >= k + slack {
        return Ok(true);
    }
    if include_self && h.contains(o) {
        let mut without_self = believed_faulty;
        without_self.insert(i);
        let rest = chains_minus(&direct, without_self);
        if max_disjoint(&rest, DEFAULT_CHAIN_CAP)?.size >= k - 1 + slack {
            return Ok(true);
        }
    }
    let group = Formula::group_occurrence(n, k, o);
    let relayed = chains_minus(&extract_chains(h, i, &group, input.trust()), believed_faulty);
    Ok(max_disjoint(&relayed, DEFAULT_CHAIN_CAP)?.size > slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::AgentProtocol;
    use crate::hopechain::TrustEntry;
    use crate::model::Name;

    fn a(i: usize) -> AgentId {
        AgentId::new(i)
    }

    fn hist(s: &str) -> LocalHistory {
        s.parse().unwrap()
    }

    fn protocol(json: &str) -> AgentProtocol {
        serde_json::from_str(json).unwrap()
    }

    fn entry(trust: &mut TrustTable, from: usize, to: usize, msg: &str, formula: &str, chain: &[usize]) {
        trust
            .insert(
                a(from),
                a(to),
                Name::new(msg),
                TrustEntry {
                    formula: formula.parse().unwrap(),
                    chain: chain.iter().map(|&x| a(x)).collect(),
                },
            )
            .unwrap();
    }

    /// Agent 2 may send `ok` to 1; every trust-tagged message is emittable
    /// by its sender.
    fn joint(n: usize, f: usize, trust: TrustTable) -> JointProtocol {
        let mut ps = vec![AgentProtocol::default(); n];
        ps[1] = protocol(r#"{"default": [["send(1,ok)"]]}"#);
        for ((from, to, msg), _) in trust.iter() {
            let send = Hap::Send { to: *to, msg: msg.clone(), copy: 0 };
            ps[from.slot()].default[0].insert(send);
        }
        JointProtocol::new(ps, vec![], trust, f).unwrap()
    }

    #[test]
    fn direct_observation() {
        let j = joint(3, 1, TrustTable::new());
        assert_eq!(dir_obs_faulty(&hist("s0; {recv(2,bad)}"), a(1), &j), AgentSet::singleton(a(2)));
        assert!(dir_obs_faulty(&hist("s0; {recv(2,ok)}"), a(1), &j).is_empty());
        assert!(dir_obs_faulty(&hist("s0"), a(1), &j).is_empty());
    }

    #[test]
    fn direct_notification() {
        let mut t = TrustTable::new();
        entry(&mut t, 3, 1, "me", "faulty(3)", &[]);
        entry(&mut t, 3, 1, "relay", "faulty(3)", &[4]);
        assert_eq!(dir_notif_faulty(&hist("s0; {recv(3,me)}"), a(1), &t), AgentSet::singleton(a(3)));
        assert!(dir_notif_faulty(&hist("s0; {recv(3,relay)}"), a(1), &t).is_empty());
        assert!(dir_notif_faulty(&hist("s0"), a(1), &t).is_empty());
    }

    #[test]
    fn self_check() {
        let j = joint(3, 1, TrustTable::new());
        assert!(self_check_faulty(&hist("s0; {send(1,bad)}"), a(2), &j).unwrap());
        assert!(!self_check_faulty(&hist("s0; {send(1,ok)}"), a(2), &j).unwrap());
        assert!(!self_check_faulty(&hist("s0"), a(2), &j).unwrap());
        assert!(!self_check_faulty(&hist("s0; {recv(1,x)}"), a(2), &j).unwrap());
    }

    #[test]
    fn fixpoint_hand_trace() {
        // f = 2, agent 2 observed directly, chains (4) and (5) about agent 3
        let mut t = TrustTable::new();
        entry(&mut t, 4, 1, "f3", "faulty(3)", &[]);
        entry(&mut t, 5, 1, "f3", "faulty(3)", &[]);
        let j = joint(5, 2, t);
        let h = hist("s0; {recv(2,bad), recv(4,f3), recv(5,f3)}");
        let input = DetectionInput::new(&h, a(1), &j);
        let r = belief_who_is_faulty(&input).unwrap();
        assert_eq!(r.faulty, [a(2), a(3)].into_iter().collect());
        assert!(matches!(r.provenance[&a(3)], Provenance::ChainThreshold { .. }));
        assert_eq!(r.iterations, 2);
        assert!(r.revalidate(&input).unwrap());
    }

    #[test]
    fn nothing_to_detect() {
        let j = joint(3, 1, TrustTable::new());
        let h = hist("s0; {recv(2,ok)}");
        let r = belief_who_is_faulty(&DetectionInput::new(&h, a(1), &j)).unwrap();
        assert!(r.faulty.is_empty());
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn self_detection_in_report() {
        let j = joint(3, 1, TrustTable::new());
        let h = hist("s0; {send(1,bad)}");
        let r = belief_who_is_faulty(&DetectionInput::new(&h, a(2), &j)).unwrap();
        assert!(r.faulty.contains(a(2)));
    }

    #[test]
    fn tampered_report_fails_revalidation() {
        let j = joint(3, 1, TrustTable::new());
        let h = hist("s0; {recv(2,ok)}");
        let input = DetectionInput::new(&h, a(1), &j);
        let mut r = belief_who_is_faulty(&input).unwrap();
        r.faulty.insert(a(2));
        r.provenance.insert(a(2), Provenance::DirectObservation { hap: Hap::recv(a(2), "ok") });
        assert!(!r.revalidate(&input).unwrap());
    }

    #[test]
    fn local_queries() {
        let h = hist("s0; {ext(o)}");
        assert!(local_knowledge(&h, &LocalQuery::Occurred("ext(o)".parse().unwrap())));
        assert!(!local_knowledge(&h, &LocalQuery::Occurred("ext(p)".parse().unwrap())));
        assert!(local_knowledge(&h, &LocalQuery::Init(Name::new("s0"))));
    }

    #[test]
    fn group_occurrence_disjuncts() {
        let o: Hap = "ext(o)".parse().unwrap();
        let mut t = TrustTable::new();
        entry(&mut t, 2, 1, "o", "occ_c(ext(o))", &[]);
        entry(&mut t, 3, 1, "o", "occ_c(ext(o))", &[]);
        let group = Formula::group_occurrence(3, 1, &o).to_string();
        entry(&mut t, 2, 1, "g", &format!("({group})"), &[]);
        entry(&mut t, 3, 1, "g", &format!("({group})"), &[]);
        let j = joint(3, 1, t);

        let both = hist("s0; {recv(2,o), recv(3,o)}");
        let input = DetectionInput::new(&both, a(1), &j);
        assert!(group_occurrence_belief(&input, &o, 1, AgentSet::EMPTY, false).unwrap());

        let relayed = hist("s0; {recv(2,g), recv(3,g)}");
        let input = DetectionInput::new(&relayed, a(1), &j);
        assert!(group_occurrence_belief(&input, &o, 1, AgentSet::EMPTY, false).unwrap());

        let one = hist("s0; {recv(2,o)}");
        let input = DetectionInput::new(&one, a(1), &j);
        assert!(!group_occurrence_belief(&input, &o, 1, AgentSet::EMPTY, false).unwrap());
        assert!(group_occurrence_belief(&input, &o, 3, AgentSet::EMPTY, false).is_err());
        assert!(group_occurrence_belief(&input, &o, 0, AgentSet::EMPTY, false).is_err());
    }
}
