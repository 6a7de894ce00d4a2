use crate::agent::AgentId;
use crate::model::{GlobalAction, GlobalHap, GlobalRound, GlobalState, Gmi};

fn sent_before(h: &GlobalState, g: &Gmi) -> bool {
    h.env.rounds().flatten().any(|x| x.performed_send() == Some(g))
}

fn sent_now(events: &GlobalRound, actions: &[GlobalRound], g: &Gmi) -> bool {
    if events.iter().any(|x| x.performed_send() == Some(g)) {
        return true;
    }
    // a correct send only happens if its sender is activated this round
    events.contains(&GlobalHap::Go(g.sender))
        && actions
            .get(g.sender.slot())
            .is_some_and(|a| a.contains(&GlobalHap::Action(GlobalAction::Send(g.clone()))))
}

/// Causality: drops correct deliveries whose GMI belongs to no send performed
/// earlier or in this round.
pub fn filter_env_b(h: &GlobalState, events: &GlobalRound, actions: &[GlobalRound]) -> GlobalRound {
    events
        .iter()
        .filter(|e| match e {
            GlobalHap::Deliver(g) => sent_before(h, g) || sent_now(events, actions, g),
            _ => true,
        })
        .cloned()
        .collect()
}

/// Causality plus the fault budget: when the round would leave more than `f`
/// agents faulty, every fault event of the round is dropped.
pub fn filter_env_bf(h: &GlobalState, events: &GlobalRound, actions: &[GlobalRound], f: usize) -> GlobalRound {
    let kept = filter_env_b(h, events, actions);
    let mut faulty = h.faulty;
    for e in kept.iter().filter(|e| e.is_fault()) {
        faulty.insert(e.owner());
    }
    if faulty.len() <= f {
        return kept;
    }
    let honest: GlobalRound = events.iter().filter(|e| !e.is_fault()).cloned().collect();
    filter_env_b(h, &honest, actions)
}

/// Keeps agent `i`'s actions only if `go(i)` survived event filtering.
pub fn filter_action_std(i: AgentId, actions: &[GlobalRound], events: &GlobalRound) -> GlobalRound {
    if events.contains(&GlobalHap::Go(i)) {
        actions[i.slot()].clone()
    } else {
        GlobalRound::new()
    }
}
