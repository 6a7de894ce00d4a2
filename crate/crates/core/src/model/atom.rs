//! Designated atomic propositions and their evaluation over runs.

use std::fmt;

use super::hap::{GlobalHap, Hap, StateId};
use super::history::Run;
use crate::agent::AgentId;
use crate::error::{Error, Result};
use crate::syntax::Cursor;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DesignatedAtom {
    Correct(AgentId),
    CorrectAt(AgentId, usize),
    Faulty(AgentId),
    FaultyAt(AgentId, usize),
    /// `i` has a faulty reason to believe `hap` occurred in round `t-1`.
    Fake { agent: AgentId, t: usize, hap: Hap },
    /// `i` has a correct reason to believe `hap` occurred in round `t-1`.
    OccCAt { agent: AgentId, t: usize, hap: Hap },
    OccC { agent: AgentId, hap: Hap },
    /// Disjunction of `OccC` over all agents.
    OccCAny(Hap),
    Occurred { agent: AgentId, hap: Hap },
    Happened { agent: AgentId, action: Hap },
    FHappened { agent: AgentId, action: Hap },
    Init { agent: AgentId, state: StateId },
}

impl DesignatedAtom {
    /// Largest agent id mentioned, for range checks.
    pub fn max_agent(&self) -> Option<AgentId> {
        use DesignatedAtom::*;
        let own = match self {
            Correct(a) | CorrectAt(a, _) | Faulty(a) | FaultyAt(a, _) => Some(*a),
            Fake { agent, .. }
            | OccCAt { agent, .. }
            | OccC { agent, .. }
            | Occurred { agent, .. }
            | Happened { agent, .. }
            | FHappened { agent, .. }
            | Init { agent, .. } => Some(*agent),
            OccCAny(_) => None,
        };
        let hap = match self {
            Fake { hap, .. } | OccCAt { hap, .. } | OccC { hap, .. } | Occurred { hap, .. } | OccCAny(hap) => {
                Some(hap)
            }
            Happened { action, .. } | FHappened { action, .. } => Some(action),
            _ => None,
        };
        let other = hap.and_then(|h| match h {
            Hap::Send { to, .. } => Some(*to),
            Hap::Recv { from, .. } => Some(*from),
            _ => None,
        });
        own.max(other)
    }

    /// Timestamp parameter, if any.
    pub fn time_param(&self) -> Option<usize> {
        match self {
            DesignatedAtom::CorrectAt(_, t)
            | DesignatedAtom::FaultyAt(_, t)
            | DesignatedAtom::Fake { t, .. }
            | DesignatedAtom::OccCAt { t, .. } => Some(*t),
            _ => None,
        }
    }
}

impl fmt::Display for DesignatedAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use DesignatedAtom::*;
        match self {
            Correct(i) => write!(f, "correct({i})"),
            CorrectAt(i, t) => write!(f, "correct({i},{t})"),
            Faulty(i) => write!(f, "faulty({i})"),
            FaultyAt(i, t) => write!(f, "faulty({i},{t})"),
            Fake { agent, t, hap } => write!(f, "fake({agent},{t},{hap})"),
            OccCAt { agent, t, hap } => write!(f, "occ_c({agent},{t},{hap})"),
            OccC { agent, hap } => write!(f, "occ_c({agent},{hap})"),
            OccCAny(hap) => write!(f, "occ_c({hap})"),
            Occurred { agent, hap } => write!(f, "occ({agent},{hap})"),
            Happened { agent, action } => write!(f, "happened({agent},{action})"),
            FHappened { agent, action } => write!(f, "fhappened({agent},{action})"),
            Init { agent, state } => write!(f, "init({agent},{state})"),
        }
    }
}

pub(crate) const ATOM_HEADS: &[&str] = &[
    "correct",
    "faulty",
    "fake",
    "occ_c",
    "occ",
    "happened",
    "fhappened",
    "init",
];

/// Parses an atom whose head identifier has already been consumed.
pub(crate) fn parse_atom_body(head: &str, c: &mut Cursor<'_>) -> Result<DesignatedAtom> {
    use super::hap::parse_local;
    use DesignatedAtom::*;
    c.expect("(")?;
    let atom = match head {
        "correct" | "faulty" => {
            let i = c.agent()?;
            let t = if c.eat(",") { Some(c.uint()? as usize) } else { None };
            match (head, t) {
                ("correct", None) => Correct(i),
                ("correct", Some(t)) => CorrectAt(i, t),
                (_, None) => Faulty(i),
                (_, Some(t)) => FaultyAt(i, t),
            }
        }
        "fake" => {
            let agent = c.agent()?;
            c.expect(",")?;
            let t = c.uint()? as usize;
            c.expect(",")?;
            Fake {
                agent,
                t,
                hap: parse_local(c)?,
            }
        }
        "occ_c" => {
            if c.peek().is_some_and(|ch| ch.is_ascii_digit()) {
                let agent = c.agent()?;
                c.expect(",")?;
                if c.peek().is_some_and(|ch| ch.is_ascii_digit()) {
                    let t = c.uint()? as usize;
                    c.expect(",")?;
                    OccCAt {
                        agent,
                        t,
                        hap: parse_local(c)?,
                    }
                } else {
                    OccC {
                        agent,
                        hap: parse_local(c)?,
                    }
                }
            } else {
                OccCAny(parse_local(c)?)
            }
        }
        "occ" | "happened" | "fhappened" | "init" => {
            let agent = c.agent()?;
            c.expect(",")?;
            match head {
                "occ" => Occurred {
                    agent,
                    hap: parse_local(c)?,
                },
                "init" => Init {
                    agent,
                    state: c.ident()?.into(),
                },
                _ => {
                    let action = parse_local(c)?;
                    if !action.is_action() {
                        return Err(c.error(format!("`{head}` expects an action, found `{action}`")));
                    }
                    if head == "happened" {
                        Happened { agent, action }
                    } else {
                        FHappened { agent, action }
                    }
                }
            }
        }
        other => return Err(c.error(format!("unknown atom `{other}`"))),
    };
    c.expect(")")?;
    Ok(atom)
}

impl std::str::FromStr for DesignatedAtom {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut c = Cursor::new(s, "atom");
        let head = c.ident()?;
        let a = parse_atom_body(head, &mut c)?;
        c.finish()?;
        Ok(a)
    }
}

fn faulty_by(run: &Run, i: AgentId, t: usize) -> bool {
    // the cached set equals "some fault event of i in r_ε(t)"
    run.states.get(t).is_some_and(|s| s.faulty.contains(i))
}

/// Whether round `round` holds a byzantine event of `i` recorded as `hap`.
fn fake_in_round(run: &Run, i: AgentId, round: usize, hap: &Hap) -> bool {
    run.env()
        .round(round)
        .is_some_and(|r| r.iter().any(|g| g.is_byzantine() && g.owner() == i && g.localize().as_ref() == Some(hap)))
}

/// Whether round `round` holds a correct event or a filtered action of `i`
/// whose local form is `hap`.
fn correct_in_round(run: &Run, i: AgentId, round: usize, hap: &Hap) -> bool {
    run.env().round(round).is_some_and(|r| {
        r.iter().any(|g| {
            (g.is_correct_event() || matches!(g, GlobalHap::Action(_)))
                && g.owner() == i
                && g.localize().as_ref() == Some(hap)
        })
    })
}

/// Literal truth value at `r(t_eval)`. Timestamp parameters beyond
/// `t_eval` are read off the run as long as they lie within the horizon and
/// are false beyond it.
pub(crate) fn holds(run: &Run, t_eval: usize, atom: &DesignatedAtom) -> bool {
    use DesignatedAtom::*;
    match atom {
        Correct(i) => !faulty_by(run, *i, t_eval),
        CorrectAt(i, t) => *t <= run.horizon() && !faulty_by(run, *i, *t),
        Faulty(i) => faulty_by(run, *i, t_eval),
        FaultyAt(i, t) => faulty_by(run, *i, *t),
        Fake { agent, t, hap } => *t >= 1 && fake_in_round(run, *agent, t - 1, hap),
        OccCAt { agent, t, hap } => *t >= 1 && correct_in_round(run, *agent, t - 1, hap),
        OccC { agent, hap } => (0..t_eval).any(|m| correct_in_round(run, *agent, m, hap)),
        OccCAny(hap) => AgentId::all(run.n()).any(|i| (0..t_eval).any(|m| correct_in_round(run, i, m, hap))),
        Occurred { agent, hap } => {
            (0..t_eval).any(|m| correct_in_round(run, *agent, m, hap) || fake_in_round(run, *agent, m, hap))
        }
        Happened { agent, action } => t_eval >= 1 && performed_by(run, *agent, t_eval - 1, action, true),
        FHappened { agent, action } => t_eval >= 1 && performed_by(run, *agent, t_eval - 1, action, false),
        Init { agent, state } => run.at(0).local(*agent).initial() == state,
    }
}

/// Whether some global action of `i` with local form `action` was performed
/// within `r_ε(t)`, correctly (if `allow_correct`) or inside a byzantine event.
fn performed_by(run: &Run, i: AgentId, t: usize, action: &Hap, allow_correct: bool) -> bool {
    run.env().haps_until(t).any(|g| match g {
        GlobalHap::Action(a) => allow_correct && a.agent() == i && a.localize() == *action,
        GlobalHap::FakeAction {
            agent,
            performed: Some(a),
            ..
        } => *agent == i && a.localize() == *action,
        _ => false,
    })
}

/// Evaluates a designated atom at `r(t_eval)`.
///
/// Rejects `t_eval` beyond the horizon and timestamp parameters beyond
/// `t_eval`.
pub fn eval_atom(run: &Run, t_eval: usize, atom: &DesignatedAtom) -> Result<bool> {
    if t_eval > run.horizon() {
        return Err(Error::OutOfRange {
            t: t_eval,
            limit: run.horizon(),
        });
    }
    if let Some(t) = atom.time_param() {
        if t > t_eval {
            return Err(Error::OutOfRange { t, limit: t_eval });
        }
    }
    if let Some(a) = atom.max_agent() {
        if a.index() > run.n() {
            return Err(Error::Precondition(format!("atom {atom} names agent {a} but n = {}", run.n())));
        }
    }
    Ok(holds(run, t_eval, atom))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atom_text_round_trip() {
        for s in [
            "correct(1)",
            "correct(1,2)",
            "faulty(3)",
            "faulty(3,0)",
            "fake(2,1,recv(1,m))",
            "occ_c(2,1,recv(1,m))",
            "occ_c(2,ext(e))",
            "occ_c(ext(e))",
            "occ(1,do(a))",
            "happened(1,send(2,m))",
            "fhappened(1,do(x))",
            "init(2,s0)",
        ] {
            let a: DesignatedAtom = s.parse().unwrap();
            assert_eq!(a.to_string(), s);
        }
        assert!("happened(1,recv(2,m))".parse::<DesignatedAtom>().is_err());
    }
}
