//! Haps in local and global format.
//!
//! Local haps are what an agent records: no timestamps, no message
//! identifiers. Global haps are the environment's view and additionally carry
//! GMIs, correctness tags and system events.
//!
//! Canonical text forms (used in scenario files and traces):
//!
//! | hap | text |
//! |-----|------|
//! | local send (copy `k`) | `send(2,m)` or `send(2,m,k)` |
//! | local internal action | `do(a)` |
//! | local receive | `recv(1,m)` |
//! | local external event | `ext(e)` |
//! | GMI | `<sender,receiver,msg,copy,sent_at>` |
//! | correct send / delivery | `gsend<1,2,m,0,3>` / `grecv<1,2,m,0,3>` |
//! | correct internal action / external event | `gdo(1,a)` / `gext(1,e)` |
//! | byzantine action | `fake(1, A -> A')` with `A`, `A'` a global action or `noop` |
//! | bare fault | `fail(1)` (same as `fake(1, noop -> noop)`) |
//! | byzantine delivery / external | `fake(2, grecv<...>)` / `fake(1, gext(1,e))` |
//! | system events | `go(1)`, `sleep(1)`, `hib(1)` |

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::AgentId;
use crate::error::{Error, Result};
use crate::syntax::Cursor;

/// Interned identifier for messages, events, actions and initial states.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Name(Arc<str>);

impl Name {
    pub fn new(s: &str) -> Self {
        Name(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name::new(s)
    }
}

impl Serialize for Name {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Name {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Name::new(&s))
    }
}

pub type MessageId = Name;
pub type StateId = Name;

/// Global message identifier: the full tuple is kept, which makes the
/// encoding injective by construction.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Gmi {
    pub sender: AgentId,
    pub receiver: AgentId,
    pub msg: MessageId,
    pub copy: u32,
    pub sent_at: usize,
}

pub fn make_gmi(sender: AgentId, receiver: AgentId, msg: MessageId, copy: u32, sent_at: usize) -> Gmi {
    Gmi {
        sender,
        receiver,
        msg,
        copy,
        sent_at,
    }
}

impl Gmi {
    pub fn decode(&self) -> (AgentId, AgentId, MessageId, u32, usize) {
        (self.sender, self.receiver, self.msg.clone(), self.copy, self.sent_at)
    }
}

impl fmt::Display for Gmi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "<{},{},{},{},{}>",
            self.sender, self.receiver, self.msg, self.copy, self.sent_at
        )
    }
}

/// A hap in an agent's local format.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Hap {
    Send { to: AgentId, msg: MessageId, copy: u32 },
    Do(Name),
    Recv { from: AgentId, msg: MessageId },
    External(Name),
}

impl Hap {
    pub fn send(to: AgentId, msg: &str) -> Hap {
        Hap::Send {
            to,
            msg: Name::new(msg),
            copy: 0,
        }
    }

    pub fn recv(from: AgentId, msg: &str) -> Hap {
        Hap::Recv {
            from,
            msg: Name::new(msg),
        }
    }

    pub fn is_action(&self) -> bool {
        matches!(self, Hap::Send { .. } | Hap::Do(_))
    }

    /// Same action up to the copy number of a send.
    pub fn same_modulo_copy(&self, other: &Hap) -> bool {
        match (self, other) {
            (Hap::Send { to: a, msg: m, .. }, Hap::Send { to: b, msg: n, .. }) => a == b && m == n,
            _ => self == other,
        }
    }
}

impl fmt::Display for Hap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hap::Send { to, msg, copy: 0 } => write!(f, "send({to},{msg})"),
            Hap::Send { to, msg, copy } => write!(f, "send({to},{msg},{copy})"),
            Hap::Do(a) => write!(f, "do({a})"),
            Hap::Recv { from, msg } => write!(f, "recv({from},{msg})"),
            Hap::External(e) => write!(f, "ext({e})"),
        }
    }
}

/// A correct action in global format.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GlobalAction {
    Send(Gmi),
    Do { agent: AgentId, action: Name },
}

impl GlobalAction {
    pub fn agent(&self) -> AgentId {
        match self {
            GlobalAction::Send(g) => g.sender,
            GlobalAction::Do { agent, .. } => *agent,
        }
    }

    pub fn localize(&self) -> Hap {
        match self {
            GlobalAction::Send(g) => Hap::Send {
                to: g.receiver,
                msg: g.msg.clone(),
                copy: g.copy,
            },
            GlobalAction::Do { action, .. } => Hap::Do(action.clone()),
        }
    }

    /// Labels a local action of `agent` performed in round `t`.
    /// Returns `None` for local events.
    pub fn globalize(agent: AgentId, hap: &Hap, t: usize) -> Option<GlobalAction> {
        match hap {
            Hap::Send { to, msg, copy } => Some(GlobalAction::Send(make_gmi(agent, *to, msg.clone(), *copy, t))),
            Hap::Do(a) => Some(GlobalAction::Do {
                agent,
                action: a.clone(),
            }),
            _ => None,
        }
    }
}

impl fmt::Display for GlobalAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlobalAction::Send(g) => write!(f, "gsend{g}"),
            GlobalAction::Do { agent, action } => write!(f, "gdo({agent},{action})"),
        }
    }
}

/// A hap in global format.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GlobalHap {
    Action(GlobalAction),
    Deliver(Gmi),
    External {
        agent: AgentId,
        event: Name,
    },
    /// The agent performs `performed` while recording `recorded`; `None`
    /// stands for the non-action.
    FakeAction {
        agent: AgentId,
        performed: Option<GlobalAction>,
        recorded: Option<GlobalAction>,
    },
    FakeDeliver(Gmi),
    FakeExternal {
        agent: AgentId,
        event: Name,
    },
    Go(AgentId),
    Sleep(AgentId),
    Hibernate(AgentId),
}

impl GlobalHap {
    pub fn fail(agent: AgentId) -> GlobalHap {
        GlobalHap::FakeAction {
            agent,
            performed: None,
            recorded: None,
        }
    }

    /// The agent this hap belongs to.
    pub fn owner(&self) -> AgentId {
        match self {
            GlobalHap::Action(a) => a.agent(),
            GlobalHap::Deliver(g) | GlobalHap::FakeDeliver(g) => g.receiver,
            GlobalHap::External { agent, .. }
            | GlobalHap::FakeAction { agent, .. }
            | GlobalHap::FakeExternal { agent, .. }
            | GlobalHap::Go(agent)
            | GlobalHap::Sleep(agent)
            | GlobalHap::Hibernate(agent) => *agent,
        }
    }

    pub fn is_event(&self) -> bool {
        !matches!(self, GlobalHap::Action(_))
    }

    pub fn is_system(&self) -> bool {
        matches!(self, GlobalHap::Go(_) | GlobalHap::Sleep(_) | GlobalHap::Hibernate(_))
    }

    pub fn is_byzantine(&self) -> bool {
        matches!(
            self,
            GlobalHap::FakeAction { .. } | GlobalHap::FakeDeliver(_) | GlobalHap::FakeExternal { .. }
        )
    }

    /// Byzantine events plus `sleep` and `hib`: the events that make an agent faulty.
    pub fn is_fault(&self) -> bool {
        self.is_byzantine() || matches!(self, GlobalHap::Sleep(_) | GlobalHap::Hibernate(_))
    }

    pub fn is_correct_event(&self) -> bool {
        matches!(self, GlobalHap::Deliver(_) | GlobalHap::External { .. })
    }

    /// The local form recorded by the owner; `None` for system events and
    /// for byzantine actions that record the non-action.
    pub fn localize(&self) -> Option<Hap> {
        match self {
            GlobalHap::Action(a) => Some(a.localize()),
            GlobalHap::Deliver(g) | GlobalHap::FakeDeliver(g) => Some(Hap::Recv {
                from: g.sender,
                msg: g.msg.clone(),
            }),
            GlobalHap::External { event, .. } | GlobalHap::FakeExternal { event, .. } => {
                Some(Hap::External(event.clone()))
            }
            GlobalHap::FakeAction { recorded, .. } => recorded.as_ref().map(GlobalAction::localize),
            GlobalHap::Go(_) | GlobalHap::Sleep(_) | GlobalHap::Hibernate(_) => None,
        }
    }

    /// The send actually performed by this hap, correct or byzantine.
    pub fn performed_send(&self) -> Option<&Gmi> {
        match self {
            GlobalHap::Action(GlobalAction::Send(g)) => Some(g),
            GlobalHap::FakeAction {
                performed: Some(GlobalAction::Send(g)),
                ..
            } => Some(g),
            _ => None,
        }
    }

    /// The action actually performed (correct or as part of a byzantine event).
    pub fn performed_action(&self) -> Option<&GlobalAction> {
        match self {
            GlobalHap::Action(a) => Some(a),
            GlobalHap::FakeAction { performed, .. } => performed.as_ref(),
            _ => None,
        }
    }
}

fn fmt_opt_action(a: &Option<GlobalAction>, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match a {
        Some(a) => write!(f, "{a}"),
        None => f.write_str("noop"),
    }
}

impl fmt::Display for GlobalHap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlobalHap::Action(a) => write!(f, "{a}"),
            GlobalHap::Deliver(g) => write!(f, "grecv{g}"),
            GlobalHap::External { agent, event } => write!(f, "gext({agent},{event})"),
            GlobalHap::FakeAction {
                agent,
                performed: None,
                recorded: None,
            } => write!(f, "fail({agent})"),
            GlobalHap::FakeAction {
                agent,
                performed,
                recorded,
            } => {
                write!(f, "fake({agent}, ")?;
                fmt_opt_action(performed, f)?;
                f.write_str(" -> ")?;
                fmt_opt_action(recorded, f)?;
                f.write_str(")")
            }
            GlobalHap::FakeDeliver(g) => write!(f, "fake({}, grecv{g})", g.receiver),
            GlobalHap::FakeExternal { agent, event } => write!(f, "fake({agent}, gext({agent},{event}))"),
            GlobalHap::Go(a) => write!(f, "go({a})"),
            GlobalHap::Sleep(a) => write!(f, "sleep({a})"),
            GlobalHap::Hibernate(a) => write!(f, "hib({a})"),
        }
    }
}

// ---------------------------------------------------------------------------
// parsing

pub(crate) fn parse_local(c: &mut Cursor<'_>) -> Result<Hap> {
    let head = c.ident()?;
    c.expect("(")?;
    let hap = match head {
        "send" => {
            let to = c.agent()?;
            c.expect(",")?;
            let msg = Name::new(c.ident()?);
            let copy = if c.eat(",") { c.uint()? as u32 } else { 0 };
            Hap::Send { to, msg, copy }
        }
        "recv" => {
            let from = c.agent()?;
            c.expect(",")?;
            Hap::Recv {
                from,
                msg: Name::new(c.ident()?),
            }
        }
        "do" => Hap::Do(Name::new(c.ident()?)),
        "ext" => Hap::External(Name::new(c.ident()?)),
        other => return Err(c.error(format!("unknown local hap `{other}`"))),
    };
    c.expect(")")?;
    Ok(hap)
}

fn parse_gmi(c: &mut Cursor<'_>) -> Result<Gmi> {
    c.expect("<")?;
    let sender = c.agent()?;
    c.expect(",")?;
    let receiver = c.agent()?;
    c.expect(",")?;
    let msg = Name::new(c.ident()?);
    c.expect(",")?;
    let copy = c.uint()? as u32;
    c.expect(",")?;
    let sent_at = c.uint()? as usize;
    c.expect(">")?;
    Ok(make_gmi(sender, receiver, msg, copy, sent_at))
}

fn parse_action_or_noop(c: &mut Cursor<'_>) -> Result<Option<GlobalAction>> {
    if c.eat("noop") {
        return Ok(None);
    }
    match parse_global_inner(c)? {
        GlobalHap::Action(a) => Ok(Some(a)),
        other => Err(c.error(format!("expected a global action or `noop`, found `{other}`"))),
    }
}

fn parse_global_inner(c: &mut Cursor<'_>) -> Result<GlobalHap> {
    let head = c.ident()?;
    let hap = match head {
        "gsend" => GlobalHap::Action(GlobalAction::Send(parse_gmi(c)?)),
        "grecv" => GlobalHap::Deliver(parse_gmi(c)?),
        "gdo" | "gext" | "go" | "sleep" | "hib" | "fail" => {
            c.expect("(")?;
            let agent = c.agent()?;
            let hap = match head {
                "gdo" | "gext" => {
                    c.expect(",")?;
                    let name = Name::new(c.ident()?);
                    if head == "gdo" {
                        GlobalHap::Action(GlobalAction::Do { agent, action: name })
                    } else {
                        GlobalHap::External { agent, event: name }
                    }
                }
                "go" => GlobalHap::Go(agent),
                "sleep" => GlobalHap::Sleep(agent),
                "hib" => GlobalHap::Hibernate(agent),
                _ => GlobalHap::fail(agent),
            };
            c.expect(")")?;
            hap
        }
        "fake" => {
            c.expect("(")?;
            let agent = c.agent()?;
            c.expect(",")?;
            let save_kind = c.peek_ident();
            let hap = match save_kind {
                Some("grecv") => {
                    c.ident()?;
                    let g = parse_gmi(c)?;
                    if g.receiver != agent {
                        return Err(c.error(format!("fake delivery at {agent} names receiver {}", g.receiver)));
                    }
                    GlobalHap::FakeDeliver(g)
                }
                Some("gext") => {
                    c.ident()?;
                    c.expect("(")?;
                    let owner = c.agent()?;
                    c.expect(",")?;
                    let event = Name::new(c.ident()?);
                    c.expect(")")?;
                    if owner != agent {
                        return Err(c.error(format!("fake external at {agent} names agent {owner}")));
                    }
                    GlobalHap::FakeExternal { agent, event }
                }
                _ => {
                    let performed = parse_action_or_noop(c)?;
                    c.expect("->")?;
                    let recorded = parse_action_or_noop(c)?;
                    for a in performed.iter().chain(recorded.iter()) {
                        if a.agent() != agent {
                            return Err(c.error(format!("byzantine action of {agent} names agent {}", a.agent())));
                        }
                    }
                    GlobalHap::FakeAction {
                        agent,
                        performed,
                        recorded,
                    }
                }
            };
            c.expect(")")?;
            hap
        }
        other => return Err(c.error(format!("unknown global hap `{other}`"))),
    };
    Ok(hap)
}

impl FromStr for Hap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut c = Cursor::new(s, "hap");
        let h = parse_local(&mut c)?;
        c.finish()?;
        Ok(h)
    }
}

impl FromStr for GlobalHap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut c = Cursor::new(s, "global hap");
        let h = parse_global_inner(&mut c)?;
        c.finish()?;
        Ok(h)
    }
}

impl FromStr for Gmi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut c = Cursor::new(s, "gmi");
        let g = parse_gmi(&mut c)?;
        c.finish()?;
        Ok(g)
    }
}

/// Serializes as canonical text.
macro_rules! text_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

text_serde!(Hap);
text_serde!(GlobalHap);
text_serde!(Gmi);
