//! Formulas and a brute-force model checker over an enumerated run set.
//!
//! Knowledge quantifies over every point of the system whose local history
//! for the agent is equal, belief is knowledge relativised to the agent's own
//! correctness, and `G` ranges over the remaining points of the run up to the
//! horizon. Truth values are computed for all points at once and memoised per
//! formula.

mod formula;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use formula::Formula;

use crate::agent::AgentId;
use crate::engine::JointProtocol;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::hopechain::nested_hope;
use crate::model::{holds, DesignatedAtom, Hap, LocalHistory, MessageId, Name, Run};

/// A point `(r, t)`: a run index into the system and a timestamp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Point {
    pub run: usize,
    pub t: usize,
}

/// Custom propositions: each name is true exactly on its set of points.
pub type Valuation = BTreeMap<Name, BTreeSet<Point>>;

type Truth = Arc<Vec<bool>>;

pub struct InterpretedSystem {
    runs: Vec<Run>,
    horizon: usize,
    n: usize,
    valuation: Valuation,
    /// Per agent, the indistinguishability class of every point.
    classes: Vec<Vec<u32>>,
    class_counts: Vec<usize>,
    quiescent: bool,
    exec: Exec,
    memo: Mutex<HashMap<Formula, Truth>>,
}

/// Two points of one run where a formula was true and later false.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PersistenceViolation {
    pub run: usize,
    pub t: usize,
    pub later: usize,
}

/// A point where an agent's protocol may send a trust-tagged message without
/// believing the tagged formula.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TrustViolation {
    pub point: Point,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub msg: MessageId,
    pub formula: Formula,
}

impl InterpretedSystem {
    pub fn new(runs: Vec<Run>, valuation: Valuation, exec: Exec) -> Result<Self> {
        let first = runs
            .first()
            .ok_or_else(|| Error::Precondition("an interpreted system needs at least one run".into()))?;
        let horizon = first.horizon();
        let n = first.n();
        if runs.iter().any(|r| r.horizon() != horizon || r.n() != n) {
            return Err(Error::Precondition("all runs must share horizon and agent count".into()));
        }
        for (name, points) in &valuation {
            if let Some(p) = points.iter().find(|p| p.run >= runs.len() || p.t > horizon) {
                return Err(Error::Precondition(format!(
                    "proposition {name} holds at ({}, {}) outside the system",
                    p.run, p.t
                )));
            }
        }
        let per_agent = exec.map_range(n, |k| {
            let i = AgentId::new(k + 1);
            let mut ids: HashMap<&LocalHistory, u32> = HashMap::new();
            let mut classes = Vec::with_capacity(runs.len() * (horizon + 1));
            for r in &runs {
                for s in &r.states {
                    let next = ids.len() as u32;
                    classes.push(*ids.entry(s.local(i)).or_insert(next));
                }
            }
            let count = ids.len();
            (classes, count)
        });
        let (classes, class_counts) = per_agent.into_iter().unzip();
        Ok(InterpretedSystem {
            runs,
            horizon,
            n,
            valuation,
            classes,
            class_counts,
            quiescent: false,
            exec,
            memo: Mutex::new(HashMap::new()),
        })
    }

    /// Declares that every round from the horizon on offers only the empty
    /// event set, so bounded evaluation agrees with unbounded evaluation.
    pub fn with_quiescent(mut self, quiescent: bool) -> Self {
        self.quiescent = quiescent;
        self
    }

    pub fn runs(&self) -> &[Run] {
        &self.runs
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn point_count(&self) -> usize {
        self.runs.len() * (self.horizon + 1)
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.runs.len()).flat_map(move |run| (0..=self.horizon).map(move |t| Point { run, t }))
    }

    fn index(&self, p: Point) -> usize {
        p.run * (self.horizon + 1) + p.t
    }

    fn point_at(&self, k: usize) -> Point {
        Point {
            run: k / (self.horizon + 1),
            t: k % (self.horizon + 1),
        }
    }

    pub fn local(&self, p: Point, i: AgentId) -> &LocalHistory {
        self.runs[p.run].at(p.t).local(i)
    }

    /// Number of distinct local histories of `i` across the system.
    pub fn class_count(&self, i: AgentId) -> usize {
        self.class_counts[i.slot()]
    }

    pub fn indistinguishable(&self, p: Point, q: Point, i: AgentId) -> bool {
        self.local(p, i) == self.local(q, i)
    }

    fn check(&self, phi: &Formula) -> Result<()> {
        if let Some(a) = phi.max_agent() {
            if a.index() > self.n {
                return Err(Error::Precondition(format!("formula {phi} names agent {a} but n = {}", self.n)));
            }
        }
        if let Some(p) = phi.props().into_iter().find(|p| !self.valuation.contains_key(*p)) {
            return Err(Error::UnknownProposition(p.to_string()));
        }
        Ok(())
    }

    pub fn eval(&self, p: Point, phi: &Formula) -> Result<bool> {
        if p.run >= self.runs.len() || p.t > self.horizon {
            return Err(Error::OutOfRange {
                t: p.t,
                limit: self.horizon,
            });
        }
        Ok(self.eval_all(phi)?[self.index(p)])
    }

    /// Truth value at every point, indexed run-major.
    pub fn eval_all(&self, phi: &Formula) -> Result<Truth> {
        self.check(phi)?;
        self.truth(phi)
    }

    fn truth(&self, phi: &Formula) -> Result<Truth> {
        if let Some(v) = self.memo.lock().unwrap().get(phi) {
            return Ok(v.clone());
        }
        let v = Arc::new(self.compute(phi)?);
        self.memo.lock().unwrap().insert(phi.clone(), v.clone());
        Ok(v)
    }

    fn compute(&self, phi: &Formula) -> Result<Vec<bool>> {
        let np = self.point_count();
        Ok(match phi {
            Formula::True => vec![true; np],
            Formula::False => vec![false; np],
            Formula::Atom(a) => self.exec.map_range(np, |k| {
                let p = self.point_at(k);
                holds(&self.runs[p.run], p.t, a)
            }),
            Formula::Prop(name) => {
                let points = self
                    .valuation
                    .get(name)
                    .ok_or_else(|| Error::UnknownProposition(name.to_string()))?;
                let mut v = vec![false; np];
                for &p in points {
                    v[self.index(p)] = true;
                }
                v
            }
            Formula::Not(g) => self.truth(g)?.iter().map(|b| !b).collect(),
            Formula::And(gs) => {
                let mut v = vec![true; np];
                for g in gs {
                    for (x, y) in v.iter_mut().zip(self.truth(g)?.iter()) {
                        *x &= *y;
                    }
                }
                v
            }
            Formula::Or(gs) => {
                let mut v = vec![false; np];
                for g in gs {
                    for (x, y) in v.iter_mut().zip(self.truth(g)?.iter()) {
                        *x |= *y;
                    }
                }
                v
            }
            Formula::Implies(a, b) => {
                let (a, b) = (self.truth(a)?, self.truth(b)?);
                a.iter().zip(b.iter()).map(|(x, y)| !x || *y).collect()
            }
            Formula::Know(i, g) => {
                let inner = self.truth(g)?;
                let classes = &self.classes[i.slot()];
                let mut ok = vec![true; self.class_counts[i.slot()]];
                for (k, &c) in classes.iter().enumerate() {
                    if !inner[k] {
                        ok[c as usize] = false;
                    }
                }
                classes.iter().map(|&c| ok[c as usize]).collect()
            }
            Formula::Believe(i, g) => {
                let rel = Formula::implies(Formula::correct(*i), (**g).clone());
                self.truth(&Formula::know(*i, rel))?.to_vec()
            }
            Formula::Hope(i, g) => {
                let rel = Formula::implies(Formula::correct(*i), Formula::believe(*i, (**g).clone()));
                self.truth(&rel)?.to_vec()
            }
            Formula::Always(g) => {
                let inner = self.truth(g)?;
                let w = self.horizon + 1;
                let mut v = vec![false; np];
                for run in 0..self.runs.len() {
                    let mut acc = true;
                    for t in (0..w).rev() {
                        acc &= inner[run * w + t];
                        v[run * w + t] = acc;
                    }
                }
                v
            }
        })
    }

    /// First `(run, t, later)` with the formula true at `t` and false at
    /// `later > t`, if any.
    pub fn verify_persistent(&self, phi: &Formula) -> Result<Option<PersistenceViolation>> {
        let v = self.eval_all(phi)?;
        let w = self.horizon + 1;
        for run in 0..self.runs.len() {
            if let Some(t) = (0..w).find(|&t| v[run * w + t]) {
                if let Some(later) = (t + 1..w).find(|&u| !v[run * w + u]) {
                    return Ok(Some(PersistenceViolation { run, t, later }));
                }
            }
        }
        Ok(None)
    }

    /// Checks every trust entry the sender's protocol can act on: whenever
    /// some offered action set contains a tagged send, the sender must
    /// believe the nested hope the tag stands for.
    pub fn verify_trust_table(&self, joint: &JointProtocol) -> Result<Vec<TrustViolation>> {
        let mut out = Vec::new();
        for i in AgentId::all(self.n) {
            // one representative point per local history
            let mut reps: Vec<Option<usize>> = vec![None; self.class_counts[i.slot()]];
            for (k, &c) in self.classes[i.slot()].iter().enumerate() {
                reps[c as usize].get_or_insert(k);
            }
            let reps: Vec<usize> = reps.into_iter().flatten().collect();
            let sends = self.exec.map(&reps, |&k| -> Result<BTreeSet<Hap>> {
                let h = self.local(self.point_at(k), i);
                Ok(joint
                    .offers(i, h)?
                    .into_iter()
                    .flatten()
                    .filter(|a| matches!(a, Hap::Send { to, msg, .. } if joint.trust().get(i, *to, msg).is_some()))
                    .collect())
            });
            for (&k, sends) in reps.iter().zip(sends) {
                for send in sends? {
                    let Hap::Send { to, msg, .. } = send else { continue };
                    let entry = joint.trust().get(i, to, &msg).expect("filtered on presence");
                    let target = nested_hope(&entry.chain, &entry.formula);
                    let believed = self.truth(&Formula::believe(i, target.clone()))?;
                    // belief is constant on a class, so the representative decides
                    if !believed[k] {
                        out.push(TrustViolation {
                            point: self.point_at(k),
                            sender: i,
                            receiver: to,
                            msg,
                            formula: target,
                        });
                    }
                }
            }
        }
        out.sort_by(|a, b| (a.point, a.sender, a.receiver, &a.msg).cmp(&(b.point, b.sender, b.receiver, &b.msg)));
        out.dedup();
        Ok(out)
    }

    /// A warning when the value of `phi` might differ on a longer horizon.
    pub fn horizon_warning(&self, phi: &Formula) -> Option<String> {
        (!self.quiescent && phi.has_modality()).then(|| {
            format!(
                "environment is still active at the horizon {}; modal formula `{phi}` is evaluated on a truncated system",
                self.horizon
            )
        })
    }
}

/// Whether `phi` is built from faulty/occurrence/init atoms and constants
/// using conjunction, disjunction, `correct(i) -> ·`, the epistemic
/// modalities and `G`. Such formulas never become false again along a run.
pub fn is_syntactically_persistent(phi: &Formula) -> bool {
    use DesignatedAtom::*;
    match phi {
        Formula::True | Formula::False => true,
        Formula::Atom(a) => matches!(a, Faulty(_) | Occurred { .. } | OccC { .. } | OccCAny(_) | Init { .. }),
        Formula::Implies(a, b) => matches!(**a, Formula::Atom(Correct(_))) && is_syntactically_persistent(b),
        Formula::Know(_, g) | Formula::Believe(_, g) | Formula::Hope(_, g) => is_syntactically_persistent(g),
        Formula::And(gs) | Formula::Or(gs) => gs.iter().all(is_syntactically_persistent),
        // true at t means true at every later point up to the horizon
        Formula::Always(_) => true,
        Formula::Prop(_) | Formula::Not(_) => false,
    }
}
