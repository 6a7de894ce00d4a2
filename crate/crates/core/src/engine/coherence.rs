use std::collections::BTreeMap;
use std::fmt;

use crate::agent::AgentId;
use crate::model::{GlobalAction, GlobalHap, GlobalRound, Name};

/// Why an event set fails to be `t`-coherent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Incoherence {
    NotAnEvent(GlobalHap),
    ByzantineSendTime { hap: GlobalHap, t: usize },
    SystemEventClash(AgentId),
    ExternalClash { agent: AgentId, event: Name },
    DeliveryClash { receiver: AgentId, sender: AgentId, msg: Name },
}

impl fmt::Display for Incoherence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Incoherence::NotAnEvent(h) => write!(f, "`{h}` is an action, not an event"),
            Incoherence::ByzantineSendTime { hap, t } => {
                write!(f, "byzantine send `{hap}` must carry a GMI stamped {t}")
            }
            Incoherence::SystemEventClash(i) => {
                write!(f, "more than one of go({i}), sleep({i}), hib({i})")
            }
            Incoherence::ExternalClash { agent, event } => {
                write!(f, "both gext({agent},{event}) and its fake counterpart")
            }
            Incoherence::DeliveryClash { receiver, sender, msg } => write!(
                f,
                "correct and fake delivery of `{msg}` from {sender} to {receiver} in one round"
            ),
        }
    }
}

/// Checks the five coherence conditions for round `t`.
pub fn coherence_violation(set: &GlobalRound, t: usize) -> Option<Incoherence> {
    let mut system: BTreeMap<AgentId, usize> = BTreeMap::new();
    let mut externals: BTreeMap<(AgentId, &Name), (bool, bool)> = BTreeMap::new();
    let mut deliveries: BTreeMap<(AgentId, AgentId, &Name), (bool, bool)> = BTreeMap::new();
    for h in set {
        match h {
            GlobalHap::Action(_) => return Some(Incoherence::NotAnEvent(h.clone())),
            GlobalHap::FakeAction { performed, .. } => {
                if let Some(GlobalAction::Send(g)) = performed {
                    if g.sent_at != t {
                        return Some(Incoherence::ByzantineSendTime { hap: h.clone(), t });
                    }
                }
            }
            GlobalHap::Go(i) | GlobalHap::Sleep(i) | GlobalHap::Hibernate(i) => {
                *system.entry(*i).or_default() += 1;
            }
            GlobalHap::External { agent, event } => externals.entry((*agent, event)).or_default().0 = true,
            GlobalHap::FakeExternal { agent, event } => externals.entry((*agent, event)).or_default().1 = true,
            GlobalHap::Deliver(g) => deliveries.entry((g.receiver, g.sender, &g.msg)).or_default().0 = true,
            GlobalHap::FakeDeliver(g) => deliveries.entry((g.receiver, g.sender, &g.msg)).or_default().1 = true,
        }
    }
    if let Some((i, _)) = system.iter().find(|(_, &c)| c > 1) {
        return Some(Incoherence::SystemEventClash(*i));
    }
    if let Some(((agent, event), _)) = externals.iter().find(|(_, &(a, b))| a && b) {
        return Some(Incoherence::ExternalClash {
            agent: *agent,
            event: (*event).clone(),
        });
    }
    if let Some(((receiver, sender, msg), _)) = deliveries.iter().find(|(_, &(a, b))| a && b) {
        return Some(Incoherence::DeliveryClash {
            receiver: *receiver,
            sender: *sender,
            msg: (*msg).clone(),
        });
    }
    None
}

pub fn check_t_coherent(set: &GlobalRound, t: usize) -> bool {
    coherence_violation(set, t).is_none()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(xs: &[&str]) -> GlobalRound {
        xs.iter().map(|x| x.parse().unwrap()).collect()
    }

    #[test]
    fn conditions() {
        assert!(check_t_coherent(&s(&[]), 0));
        assert!(!check_t_coherent(&s(&["go(1)", "sleep(1)"]), 0));
        assert!(check_t_coherent(&s(&["go(1)", "sleep(2)"]), 0));
        assert!(!check_t_coherent(
            &s(&["grecv<2,1,m,0,0>", "fake(1, grecv<2,1,m,0,1>)"]),
            3
        ));
        assert!(check_t_coherent(
            &s(&["grecv<2,1,m,0,0>", "fake(1, grecv<2,1,other,0,1>)"]),
            3
        ));
        assert!(!check_t_coherent(&s(&["gext(1,e)", "fake(1, gext(1,e))"]), 0));
        assert!(!check_t_coherent(&s(&["fake(1, gsend<1,2,m,0,2> -> noop)"]), 3));
        assert!(check_t_coherent(&s(&["fake(1, gsend<1,2,m,0,3> -> noop)"]), 3));
        assert!(!check_t_coherent(&s(&["gdo(1,a)"]), 0));
    }
}
