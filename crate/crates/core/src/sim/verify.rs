use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::scenario::{Query, Scenario};
use crate::agent::{AgentId, AgentSet};
use crate::detection::{belief_who_is_faulty, group_occurrence_belief, BeliefReport, DetectionInput, Provenance};
use crate::epistemics::{Formula, InterpretedSystem, Point};
use crate::error::Result;
use crate::exec::Exec;
use crate::model::{Hap, LocalHistory, Run};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryVerdict {
    pub hap: Hap,
    pub k: usize,
    /// `None` when the agent believes more than `f` agents faulty, where the
    /// test does not apply.
    pub verdict: Option<bool>,
}

/// Detection output for one agent at one point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub run: usize,
    pub time: usize,
    pub agent: AgentId,
    #[serde(rename = "F")]
    pub faulty: AgentSet,
    pub provenance: BTreeMap<AgentId, Provenance>,
    pub iterations: usize,
    /// Whether every provenance entry re-validated independently.
    pub revalidated: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub queries: Vec<QueryVerdict>,
}

#[derive(Clone, Debug)]
struct Local {
    report: BeliefReport,
    revalidated: bool,
    queries: Vec<QueryVerdict>,
}

fn detect_one(scenario: &Scenario, h: &LocalHistory, i: AgentId) -> Result<Local> {
    let joint = &scenario.context.joint;
    let input = DetectionInput::new(h, i, joint);
    let report = belief_who_is_faulty(&input)?;
    let revalidated = report.revalidate(&input)?;
    let queries = scenario
        .queries
        .iter()
        .map(|q: &Query| {
            let verdict = if report.faulty.len() <= scenario.f() {
                Some(group_occurrence_belief(&input, &q.hap, q.k, report.faulty, q.include_self)?)
            } else {
                None
            };
            Ok(QueryVerdict {
                hap: q.hap.clone(),
                k: q.k,
                verdict,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Local {
        report,
        revalidated,
        queries,
    })
}

/// Runs detection for every run, timestamp and agent, computing each
/// distinct local history once. Records come in (run, time, agent) order.
pub fn detect_all(scenario: &Scenario, runs: &[Run], exec: Exec) -> Result<Vec<DetectionRecord>> {
    let n = scenario.n();
    let mut index: HashMap<(AgentId, &LocalHistory), usize> = HashMap::new();
    let mut keys: Vec<(AgentId, &LocalHistory)> = Vec::new();
    for r in runs {
        for s in &r.states {
            for i in AgentId::all(n) {
                index.entry((i, s.local(i))).or_insert_with(|| {
                    keys.push((i, s.local(i)));
                    keys.len() - 1
                });
            }
        }
    }
    let locals: Vec<Local> = exec
        .map(&keys, |(i, h)| detect_one(scenario, h, *i))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (run, r) in runs.iter().enumerate() {
        for (time, s) in r.states.iter().enumerate() {
            for agent in AgentId::all(n) {
                let l = &locals[index[&(agent, s.local(agent))]];
                out.push(DetectionRecord {
                    run,
                    time,
                    agent,
                    faulty: l.report.faulty,
                    provenance: l.report.provenance.clone(),
                    iterations: l.report.iterations,
                    revalidated: l.revalidated,
                    queries: l.queries.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// One oracle evaluation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub run: usize,
    pub time: usize,
    pub formula: String,
    pub value: bool,
}

/// Evaluates `phi` at one point or at every point of the system.
pub fn oracle_check(system: &InterpretedSystem, phi: &Formula, at: Option<Point>) -> Result<Vec<Verdict>> {
    let text = phi.to_string();
    let points: Vec<Point> = match at {
        Some(p) => vec![p],
        None => system.points().collect(),
    };
    points
        .into_iter()
        .map(|p| {
            Ok(Verdict {
                run: p.run,
                time: p.t,
                formula: text.clone(),
                value: system.eval(p, phi)?,
            })
        })
        .collect()
}

/// A detection claim the oracle refutes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unsound {
    pub run: usize,
    pub time: usize,
    pub agent: AgentId,
    pub claim: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossCheck {
    /// Number of belief claims checked.
    pub claims: usize,
    pub unsound: Vec<Unsound>,
}

/// Checks every claim in `records` against the oracle: each `ℓ ∈ F` must be
/// believed faulty, each positive query must be believed, and every
/// provenance must re-validate.
pub fn cross_check(scenario: &Scenario, system: &InterpretedSystem, records: &[DetectionRecord]) -> Result<CrossCheck> {
    let mut out = CrossCheck::default();
    for r in records {
        let p = Point { run: r.run, t: r.time };
        let mut refute = |claim: String| {
            out.unsound.push(Unsound {
                run: r.run,
                time: r.time,
                agent: r.agent,
                claim,
            })
        };
        if !r.revalidated {
            refute(format!("provenance of F = {} does not re-validate", r.faulty));
        }
        for l in r.faulty.iter() {
            let phi = Formula::believe(r.agent, Formula::faulty(l));
            out.claims += 1;
            if !system.eval(p, &phi)? {
                refute(phi.to_string());
            }
        }
        for q in &r.queries {
            if q.verdict == Some(true) {
                let phi = Formula::believe(r.agent, Formula::group_occurrence(scenario.n(), q.k, &q.hap));
                out.claims += 1;
                if !system.eval(p, &phi)? {
                    refute(phi.to_string());
                }
            }
        }
    }
    Ok(out)
}
