use std::collections::{BTreeSet, HashSet};

use serde::Serialize;

use super::{check_t_coherent, AgentContext};
use crate::agent::AgentId;
use crate::model::{GlobalHap, GlobalRound};

/// Largest per-agent fault alphabet whose subsets are all tried.
const EXHAUSTIVE_ALPHABET: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AgentClosure {
    pub agent: AgentId,
    pub fallible: bool,
    pub correctable: bool,
    pub delayable: bool,
    pub gullible: bool,
    /// False when a fault alphabet was too large and only subsets of size
    /// at most two were tried.
    pub gullible_exhaustive: bool,
    /// First failing closure condition, if any.
    pub counterexample: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClosureReport {
    pub agents: Vec<AgentClosure>,
}

impl ClosureReport {
    pub fn all_hold(&self) -> bool {
        self.agents
            .iter()
            .all(|a| a.fallible && a.correctable && a.delayable && a.gullible)
    }
}

fn show(set: &GlobalRound) -> String {
    let parts: Vec<String> = set.iter().map(ToString::to_string).collect();
    format!("{{{}}}", parts.join(", "))
}

fn subsets_up_to(alphabet: &[GlobalHap], max: usize) -> Vec<GlobalRound> {
    let mut out = vec![GlobalRound::new()];
    for h in alphabet {
        let grown: Vec<GlobalRound> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut s = s.clone();
                s.insert(h.clone());
                s
            })
            .collect();
        out.extend(grown);
    }
    out
}

/// Checks, for every round before the horizon and every offered event set,
/// that the menu is closed under branding, correcting, delaying and
/// corrupting each agent.
pub fn check_closure_properties(ctx: &AgentContext) -> ClosureReport {
    let n = ctx.n();
    let mut agents: Vec<AgentClosure> = AgentId::all(n)
        .map(|agent| AgentClosure {
            agent,
            fallible: true,
            correctable: true,
            delayable: true,
            gullible: true,
            gullible_exhaustive: true,
            counterexample: None,
        })
        .collect();
    for t in 0..ctx.horizon {
        let menu = ctx.env.menu(t);
        let offered: HashSet<&GlobalRound> = menu.iter().collect();
        for report in agents.iter_mut() {
            let i = report.agent;
            let alphabet: Vec<GlobalHap> = menu
                .iter()
                .flatten()
                .filter(|h| h.is_fault() && h.owner() == i)
                .cloned()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let ys = if alphabet.len() <= EXHAUSTIVE_ALPHABET {
                subsets_up_to(&alphabet, alphabet.len())
            } else {
                report.gullible_exhaustive = false;
                subsets_up_to(&alphabet, 2)
            };
            let fail = |report: &mut AgentClosure, what: &str, x: &GlobalRound, missing: &GlobalRound| {
                if report.counterexample.is_none() {
                    report.counterexample = Some(format!(
                        "{what}: round {t} offers {} but not {}",
                        show(x),
                        show(missing)
                    ));
                }
            };
            for x in menu {
                if report.fallible {
                    let mut y = x.clone();
                    y.insert(GlobalHap::fail(i));
                    if !offered.contains(&y) {
                        report.fallible = false;
                        fail(report, "fallible", x, &y);
                    }
                }
                if report.correctable {
                    let y: GlobalRound = x.iter().filter(|h| !(h.is_fault() && h.owner() == i)).cloned().collect();
                    if !offered.contains(&y) {
                        report.correctable = false;
                        fail(report, "correctable", x, &y);
                    }
                }
                let rest: GlobalRound = x.iter().filter(|h| h.owner() != i).cloned().collect();
                if report.delayable && !offered.contains(&rest) {
                    report.delayable = false;
                    fail(report, "delayable", x, &rest);
                }
                if report.gullible {
                    for y in &ys {
                        let mut z = rest.clone();
                        z.extend(y.iter().cloned());
                        if check_t_coherent(&z, t) && !offered.contains(&z) {
                            report.gullible = false;
                            fail(report, "gullible", x, &z);
                            break;
                        }
                    }
                }
            }
        }
    }
    ClosureReport { agents }
}
