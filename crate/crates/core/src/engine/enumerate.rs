//! Exhaustive run enumeration and the seeded adversary.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ActionSet, AgentContext};
use crate::agent::AgentId;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{GlobalHap, GlobalRound, GlobalState, Run};

/// Default bound on explored nodes of the run tree.
pub const DEFAULT_NODE_CAP: u64 = 1_000_000;

#[derive(Clone, Debug)]
pub struct Enumeration {
    /// Distinct runs, ordered by branch path.
    pub runs: Vec<Run>,
    /// Leaves of the raw choice tree (every combination of choices).
    pub choice_paths: u128,
    /// Distinct nodes over all levels.
    pub explored_nodes: u64,
}

struct Node {
    state: Arc<GlobalState>,
    parent: usize,
    paths: u128,
}

fn offers_for(ctx: &AgentContext, s: &GlobalState) -> Result<Vec<Vec<ActionSet>>> {
    AgentId::all(ctx.n()).map(|i| ctx.joint.offers(i, s.local(i))).collect()
}

/// Calls `f` on every combination, first index varying slowest.
fn for_each_combination(sizes: &[usize], mut f: impl FnMut(&[usize])) {
    if sizes.contains(&0) {
        return;
    }
    let mut idx = vec![0; sizes.len()];
    loop {
        f(&idx);
        let mut k = sizes.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < sizes[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn expand(ctx: &AgentContext, node: &Node, offers: &[Vec<ActionSet>]) -> Vec<(GlobalState, u128)> {
    let s = &node.state;
    let menu = ctx.env.menu(s.time());
    let mut sizes = vec![menu.len()];
    sizes.extend(offers.iter().map(Vec::len));
    let mut children: Vec<(GlobalState, u128)> = Vec::new();
    let mut index: HashMap<GlobalState, usize> = HashMap::new();
    for_each_combination(&sizes, |idx| {
        let choices: Vec<ActionSet> = offers.iter().zip(&idx[1..]).map(|(o, &k)| o[k].clone()).collect();
        let child = ctx.transition(s, &menu[idx[0]], &choices);
        match index.get(&child) {
            Some(&k) => children[k].1 += node.paths,
            None => {
                index.insert(child.clone(), children.len());
                children.push((child, node.paths));
            }
        }
    });
    children
}

/// All runs of the context up to its horizon.
///
/// Before each level the number of raw children is computed; the call fails
/// if explored plus projected nodes would exceed `cap`.
pub fn enumerate_runs(ctx: &AgentContext, exec: Exec, cap: u64) -> Result<Enumeration> {
    let mut initial: Vec<Node> = Vec::new();
    let mut seen: HashMap<Vec<crate::model::StateId>, usize> = HashMap::new();
    let globals = ctx.initial_global_states();
    for ids in &ctx.initial_states {
        match seen.get(ids) {
            Some(&k) => initial[k].paths += 1,
            None => {
                seen.insert(ids.clone(), initial.len());
                initial.push(Node {
                    state: globals[initial.len()].clone(),
                    parent: usize::MAX,
                    paths: 1,
                });
            }
        }
    }
    let mut explored = initial.len() as u64;
    if explored > cap {
        return Err(Error::CapExceeded {
            what: "explored nodes",
            count: explored,
            cap,
        });
    }
    let mut levels: Vec<Vec<Node>> = vec![initial];
    for _t in 0..ctx.horizon {
        let level = levels.last().unwrap();
        let offers: Vec<Vec<Vec<ActionSet>>> = exec
            .map(level, |node| offers_for(ctx, &node.state))
            .into_iter()
            .collect::<Result<_>>()?;
        let projected: u64 = level
            .iter()
            .zip(&offers)
            .map(|(node, o)| {
                let menu = ctx.env.menu(node.state.time()).len() as u64;
                o.iter().fold(menu, |acc, x| acc.saturating_mul(x.len() as u64))
            })
            .fold(0u64, |a, b| a.saturating_add(b));
        if explored.saturating_add(projected) > cap {
            return Err(Error::CapExceeded {
                what: "explored nodes",
                count: explored.saturating_add(projected),
                cap,
            });
        }
        let items: Vec<(usize, &Node, &Vec<Vec<ActionSet>>)> =
            level.iter().zip(&offers).enumerate().map(|(k, (n, o))| (k, n, o)).collect();
        let expanded = exec.map(&items, |(k, node, o)| (*k, expand(ctx, node, o)));
        let mut next = Vec::new();
        for (parent, children) in expanded {
            for (state, paths) in children {
                next.push(Node {
                    state: Arc::new(state),
                    parent,
                    paths,
                });
            }
        }
        explored += next.len() as u64;
        levels.push(next);
    }
    let leaves = levels.last().unwrap();
    let choice_paths = leaves.iter().map(|n| n.paths).sum();
    let runs = (0..leaves.len())
        .map(|mut k| {
            let mut states = Vec::with_capacity(levels.len());
            for level in levels.iter().rev() {
                let node = &level[k];
                states.push(node.state.clone());
                k = node.parent;
            }
            states.reverse();
            Run { states }
        })
        .collect();
    Ok(Enumeration {
        runs,
        choice_paths,
        explored_nodes: explored,
    })
}

/// Filtered haps of one round, split into events and per-agent actions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    pub events: GlobalRound,
    pub actions: Vec<GlobalRound>,
}

impl RoundRecord {
    /// Splits every round of the run's environment history.
    pub fn from_run(run: &Run) -> Vec<RoundRecord> {
        let n = run.n();
        run.env()
            .rounds()
            .enumerate()
            .map(|(t, round)| {
                let mut events = GlobalRound::new();
                let mut actions = vec![GlobalRound::new(); n];
                for g in round {
                    match g {
                        GlobalHap::Action(a) => {
                            actions[a.agent().slot()].insert(g.clone());
                        }
                        _ => {
                            events.insert(g.clone());
                        }
                    }
                }
                RoundRecord { t, events, actions }
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct SeededRun {
    pub run: Run,
    /// Index of the chosen initial global state.
    pub initial: usize,
}

/// Index in `0..len` for choice point `cp` of round `t`. Choice point 0 is
/// the initial state, 1 the environment, `1 + i` agent `i`.
fn pick(seed: u64, t: usize, cp: usize, n: usize, len: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((t * (n + 2) + cp) as u64);
    rng.random_range(0..len)
}

fn text_order<T>(items: &[T], text: impl Fn(&T) -> String) -> Vec<usize> {
    let mut order: Vec<(String, usize)> = items.iter().enumerate().map(|(k, x)| (text(x), k)).collect();
    order.sort();
    order.into_iter().map(|(_, k)| k).collect()
}

fn set_text<T: std::fmt::Display>(s: &std::collections::BTreeSet<T>) -> String {
    let parts: Vec<String> = s.iter().map(|h| h.to_string()).collect();
    format!("{{{}}}", parts.join(", "))
}

/// One run with every choice resolved by a seeded generator. The result is
/// a function of the context and the seed only.
pub fn simulate_seeded(ctx: &AgentContext, seed: u64) -> Result<SeededRun> {
    let n = ctx.n();
    let initials = ctx.initial_global_states();
    let order = text_order(&initials, |s| {
        s.locals.iter().map(|h| h.initial().to_string()).collect::<Vec<_>>().join(",")
    });
    let initial = order[pick(seed, 0, 0, n, initials.len())];
    let mut states = vec![initials[initial].clone()];
    for t in 0..ctx.horizon {
        let s = states.last().unwrap().clone();
        // menus are already in canonical text order
        let menu = ctx.env.menu(t);
        let env_choice = &menu[pick(seed, t, 1, n, menu.len())];
        let mut choices = Vec::with_capacity(n);
        for i in AgentId::all(n) {
            let offers = ctx.joint.offers(i, s.local(i))?;
            let order = text_order(&offers, set_text);
            choices.push(offers[order[pick(seed, t, 1 + i.index(), n, offers.len())]].clone());
        }
        states.push(Arc::new(ctx.step(&s, env_choice, &choices)?));
    }
    Ok(SeededRun {
        run: Run { states },
        initial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::tests::two_agent_ctx;
    use crate::engine::AgentProtocol;

    fn s(xs: &[&str]) -> GlobalRound {
        xs.iter().map(|x| x.parse().unwrap()).collect()
    }

    #[test]
    fn product_of_choice_counts() {
        let menu = vec![s(&[]), s(&["go(1)"])];
        let ctx = two_agent_ctx(vec![menu.clone(), menu], AgentProtocol::default(), 2);
        let e = enumerate_runs(&ctx, Exec::Sequential, DEFAULT_NODE_CAP).unwrap();
        assert_eq!(e.runs.len(), 4);
        assert_eq!(e.choice_paths, 4);
        assert_eq!(e.explored_nodes, 1 + 2 + 4);
    }

    #[test]
    fn horizon_zero_gives_initial_states() {
        let mut ctx = two_agent_ctx(vec![], AgentProtocol::default(), 0);
        ctx.initial_states.push(vec!["a".into(), "b".into()]);
        let e = enumerate_runs(&ctx, Exec::Parallel, DEFAULT_NODE_CAP).unwrap();
        assert_eq!(e.runs.len(), 2);
        assert!(e.runs.iter().all(|r| r.horizon() == 0));
    }

    #[test]
    fn duplicate_children_merge() {
        // both choices are invisible: no go, nothing perceived
        let menu = vec![s(&[]), s(&["go(2)"])];
        let p: AgentProtocol = serde_json::from_str(r#"{"default": [[], ["do(x)"]]}"#).unwrap();
        let ctx = two_agent_ctx(vec![menu], p, 1);
        let e = enumerate_runs(&ctx, Exec::Sequential, DEFAULT_NODE_CAP).unwrap();
        assert_eq!(e.choice_paths, 4);
        assert_eq!(e.runs.len(), 2);
    }

    #[test]
    fn cap_reports_projection() {
        let menu = vec![s(&[]), s(&["go(1)"])];
        let ctx = two_agent_ctx(vec![menu.clone(), menu.clone(), menu], AgentProtocol::default(), 3);
        match enumerate_runs(&ctx, Exec::Sequential, 5) {
            Err(Error::CapExceeded { count, cap, .. }) => {
                assert_eq!(cap, 5);
                assert_eq!(count, 1 + 2 + 4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn modes_agree() {
        let menu = vec![s(&[]), s(&["go(1)"]), s(&["go(1)", "go(2)"])];
        let p: AgentProtocol = serde_json::from_str(r#"{"default": [["send(2,m)"], ["do(x)"]]}"#).unwrap();
        let ctx = two_agent_ctx(vec![menu.clone(), menu], p, 2);
        let a = enumerate_runs(&ctx, Exec::Sequential, DEFAULT_NODE_CAP).unwrap();
        let b = enumerate_runs(&ctx, Exec::Parallel, DEFAULT_NODE_CAP).unwrap();
        assert_eq!(a.runs, b.runs);
    }

    #[test]
    fn seeded_runs_are_reproducible_and_enumerated() {
        let menu = vec![s(&[]), s(&["go(1)"]), s(&["go(1)", "go(2)"])];
        let p: AgentProtocol = serde_json::from_str(r#"{"default": [["send(2,m)"], ["do(x)"]]}"#).unwrap();
        let ctx = two_agent_ctx(vec![menu.clone(), menu], p, 2);
        let all = enumerate_runs(&ctx, Exec::Sequential, DEFAULT_NODE_CAP).unwrap();
        for seed in 0..20 {
            let a = simulate_seeded(&ctx, seed).unwrap();
            let b = simulate_seeded(&ctx, seed).unwrap();
            assert_eq!(a.run, b.run);
            assert!(all.runs.contains(&a.run));
        }
    }

    #[test]
    fn round_records_split_actions() {
        let p: AgentProtocol = serde_json::from_str(r#"{"default": [["send(2,m)"]]}"#).unwrap();
        let ctx = two_agent_ctx(vec![vec![s(&["go(1)"])]], p, 1);
        let r = simulate_seeded(&ctx, 3).unwrap().run;
        let recs = RoundRecord::from_run(&r);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].events, s(&["go(1)"]));
        assert_eq!(recs[0].actions[0], s(&["gsend<1,2,m,0,0>"]));
    }
}
