//! Protocols, coherence, filters, the round transition and run enumeration.

mod closure;
mod coherence;
mod enumerate;
mod filter;
mod protocol;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use closure::{check_closure_properties, ClosureReport};
pub use coherence::{check_t_coherent, coherence_violation, Incoherence};
pub use enumerate::{enumerate_runs, simulate_seeded, Enumeration, RoundRecord, SeededRun, DEFAULT_NODE_CAP};
pub use filter::{filter_action_std, filter_env_b, filter_env_bf};
pub use protocol::{
    number_copies, ActionSet, AgentProtocol, Condition, EnvProtocol, HistoryKey, JointProtocol, RelayFamily, Rule,
};

use crate::agent::AgentId;
use crate::error::{Error, Result};
use crate::model::{GlobalAction, GlobalHap, GlobalRound, GlobalState, LocalHistory, StateId};

/// Transition template: causality only, or causality plus a fault budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Template {
    B,
    Bf(usize),
}

/// Everything that determines the set of runs.
#[derive(Clone, Debug)]
pub struct AgentContext {
    pub env: EnvProtocol,
    pub joint: JointProtocol,
    /// Initial local state ids, one vector of `n` per initial global state.
    pub initial_states: Vec<Vec<StateId>>,
    pub template: Template,
    pub horizon: usize,
}

impl AgentContext {
    pub fn n(&self) -> usize {
        self.joint.n()
    }

    /// Initial global states in declaration order, duplicates removed.
    pub fn initial_global_states(&self) -> Vec<Arc<GlobalState>> {
        let mut seen = std::collections::HashSet::new();
        self.initial_states
            .iter()
            .filter(|ids| seen.insert((*ids).clone()))
            .map(|ids| Arc::new(GlobalState::initial(ids.iter().cloned().map(LocalHistory::new).collect())))
            .collect()
    }

    /// Labels, filters and applies one round; the choices are not checked
    /// against the protocols.
    pub fn transition(&self, s: &GlobalState, env_choice: &GlobalRound, agent_choices: &[ActionSet]) -> GlobalState {
        let (events, actions) = self.filtered(s, env_choice, agent_choices);
        s.update(&events, &actions)
    }

    /// Filtered round sets `(β_ε, β_1 … β_n)` for the given choices.
    pub fn filtered(
        &self,
        s: &GlobalState,
        env_choice: &GlobalRound,
        agent_choices: &[ActionSet],
    ) -> (GlobalRound, Vec<GlobalRound>) {
        let t = s.time();
        let alpha: Vec<GlobalRound> = agent_choices
            .iter()
            .enumerate()
            .map(|(k, xs)| {
                let i = AgentId::new(k + 1);
                xs.iter()
                    .filter_map(|a| GlobalAction::globalize(i, a, t))
                    .map(GlobalHap::Action)
                    .collect()
            })
            .collect();
        let events = match self.template {
            Template::B => filter_env_b(s, env_choice, &alpha),
            Template::Bf(f) => filter_env_bf(s, env_choice, &alpha, f),
        };
        let actions = AgentId::all(self.n())
            .map(|i| filter_action_std(i, &alpha, &events))
            .collect();
        (events, actions)
    }

    /// One checked round: the choices must be offered by the protocols.
    pub fn step(&self, s: &GlobalState, env_choice: &GlobalRound, agent_choices: &[ActionSet]) -> Result<GlobalState> {
        let t = s.time();
        if !self.env.menu(t).contains(env_choice) {
            return Err(Error::ChoiceNotOffered(format!("event set at round {t}")));
        }
        if agent_choices.len() != self.n() {
            return Err(Error::ChoiceNotOffered(format!(
                "{} action sets for {} agents",
                agent_choices.len(),
                self.n()
            )));
        }
        for i in AgentId::all(self.n()) {
            let offers = self.joint.offers(i, s.local(i))?;
            if !offers.contains(&agent_choices[i.slot()]) {
                return Err(Error::ChoiceNotOffered(format!("action set of agent {i} at round {t}")));
            }
        }
        Ok(self.transition(s, env_choice, agent_choices))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hopechain::TrustTable;
    use crate::model::{Hap, Name};

    pub(crate) fn two_agent_ctx(menus: Vec<Vec<GlobalRound>>, p1: AgentProtocol, horizon: usize) -> AgentContext {
        AgentContext {
            env: EnvProtocol::new(menus).unwrap(),
            joint: JointProtocol::new(vec![p1, AgentProtocol::default()], vec![], TrustTable::new(), 0).unwrap(),
            initial_states: vec![vec![Name::new("s0"), Name::new("s0")]],
            template: Template::B,
            horizon,
        }
    }

    fn s(xs: &[&str]) -> GlobalRound {
        xs.iter().map(|x| x.parse().unwrap()).collect()
    }

    fn acts(xs: &[&str]) -> ActionSet {
        xs.iter().map(|x| x.parse().unwrap()).collect()
    }

    fn sender() -> AgentProtocol {
        serde_json::from_str(r#"{"default": [["send(2,mu)"]]}"#).unwrap()
    }

    #[test]
    fn go_only_for_sender() {
        let ctx = two_agent_ctx(vec![vec![s(&["go(1)"])]], sender(), 1);
        let s0 = &ctx.initial_global_states()[0];
        let s1 = ctx.step(s0, &s(&["go(1)"]), &[acts(&["send(2,mu)"]), acts(&[])]).unwrap();
        assert!(s1.env.round(0).unwrap().contains(&"gsend<1,2,mu,0,0>".parse().unwrap()));
        assert_eq!(s1.local(AgentId::new(2)), s0.local(AgentId::new(2)));
        assert_eq!(s1.local(AgentId::new(1)).to_string(), "s0; {send(2,mu)}");
    }

    #[test]
    fn empty_round_changes_only_env() {
        let ctx = two_agent_ctx(vec![vec![s(&[])]], sender(), 1);
        let s0 = &ctx.initial_global_states()[0];
        let s1 = ctx.step(s0, &s(&[]), &[acts(&["send(2,mu)"]), acts(&[])]).unwrap();
        assert_eq!(s1.locals, s0.locals);
        assert_eq!(s1.env.len(), 1);
        assert!(s1.env.round(0).unwrap().is_empty());
    }

    #[test]
    fn delivery_with_go() {
        let ctx = two_agent_ctx(
            vec![vec![s(&["go(1)", "go(2)", "grecv<1,2,mu,0,0>"])]],
            sender(),
            1,
        );
        let s0 = &ctx.initial_global_states()[0];
        let s1 = ctx
            .step(s0, &s(&["go(1)", "go(2)", "grecv<1,2,mu,0,0>"]), &[acts(&["send(2,mu)"]), acts(&[])])
            .unwrap();
        assert!(s1.local(AgentId::new(2)).contains(&Hap::recv(AgentId::new(1), "mu")));
    }

    #[test]
    fn step_rejects_unoffered_choices() {
        let ctx = two_agent_ctx(vec![vec![s(&["go(1)"])]], sender(), 1);
        let s0 = &ctx.initial_global_states()[0];
        assert!(matches!(
            ctx.step(s0, &s(&["go(2)"]), &[acts(&["send(2,mu)"]), acts(&[])]),
            Err(Error::ChoiceNotOffered(_))
        ));
        assert!(matches!(
            ctx.step(s0, &s(&["go(1)"]), &[acts(&[]), acts(&[])]),
            Err(Error::ChoiceNotOffered(_))
        ));
    }
}
