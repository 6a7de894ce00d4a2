use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentId, MAX_AGENTS};
use crate::engine::{
    check_closure_properties, coherence_violation, enumerate_runs, AgentContext, AgentProtocol, ClosureReport,
    Condition, EnvProtocol, Enumeration, JointProtocol, RelayFamily, Template, DEFAULT_NODE_CAP,
};
use crate::epistemics::{is_syntactically_persistent, Formula, InterpretedSystem, Point, Valuation};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::hopechain::{TrustEntry, TrustTable};
use crate::model::{GlobalHap, GlobalRound, Gmi, Hap, Name, Run, StateId};

/// Largest base list accepted by a `subsets` menu.
const MAX_SUBSET_BASE: usize = 16;
/// Largest product a `per_agent` menu may expand to.
const MAX_PRODUCT: usize = 1 << 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Seeded,
    #[default]
    Enumerate,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Adversary {
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    #[serde(default = "default_nodes")]
    pub nodes: u64,
}

fn default_nodes() -> u64 {
    DEFAULT_NODE_CAP
}

impl Default for Caps {
    fn default() -> Self {
        Caps { nodes: DEFAULT_NODE_CAP }
    }
}

/// A group occurrence question asked at every point by `detect`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub hap: Hap,
    pub k: usize,
    #[serde(default)]
    pub include_self: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawTemplate {
    B,
    #[default]
    Bf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FaultMode {
    /// Options are used as written.
    #[default]
    Explicit,
    /// Options are closed under branding, correcting, delaying and every
    /// coherent subset of the fault alphabet.
    Closed,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgentMenu {
    #[serde(default)]
    options: Vec<Vec<String>>,
    #[serde(default)]
    faults: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPerAgent {
    agents: BTreeMap<String, RawAgentMenu>,
    #[serde(default)]
    fault_mode: FaultMode,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawMenu {
    Sets(Vec<Vec<String>>),
    Subsets(Vec<String>),
    PerAgent(RawPerAgent),
    Repeat { times: usize, menu: Box<RawMenu> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrust {
    from: AgentId,
    to: AgentId,
    msg: Name,
    formula: String,
    #[serde(default)]
    chain: Vec<AgentId>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRelay {
    agent: AgentId,
    formula: String,
    prefix: Name,
    to: Vec<AgentId>,
    max_len: usize,
    #[serde(default)]
    origin: Option<Condition>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    description: String,
    agents: usize,
    f: usize,
    #[serde(default)]
    template: RawTemplate,
    horizon: usize,
    #[serde(default)]
    initial_states: Option<Vec<Vec<StateId>>>,
    #[serde(default)]
    agent_protocols: BTreeMap<String, AgentProtocol>,
    env_protocol: Vec<RawMenu>,
    #[serde(default)]
    trust_table: Vec<RawTrust>,
    #[serde(default)]
    relays: Vec<RawRelay>,
    #[serde(default)]
    propositions: BTreeMap<String, String>,
    #[serde(default)]
    adversary: Adversary,
    #[serde(default)]
    caps: Caps,
    #[serde(default)]
    queries: Vec<Query>,
    #[serde(default)]
    oracle: bool,
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub context: AgentContext,
    /// Custom propositions, each true where its defining formula holds.
    pub propositions: BTreeMap<Name, Formula>,
    pub adversary: Adversary,
    pub caps: Caps,
    pub queries: Vec<Query>,
    /// Whether the trust table must pass oracle verification.
    pub oracle: bool,
}

fn err(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::scenario(path, message)
}

fn agent_in(path: &str, a: AgentId, n: usize) -> Result<()> {
    if a.index() > n {
        return Err(err(path, format!("agent {a} out of range 1..={n}")));
    }
    Ok(())
}

fn formula(path: &str, text: &str, n: usize) -> Result<Formula> {
    let f = Formula::parse_with(text, Some(n)).map_err(|e| err(path, e.to_string()))?;
    if let Some(a) = f.max_agent() {
        agent_in(path, a, n)?;
    }
    Ok(f)
}

fn persistent_formula(path: &str, text: &str, n: usize) -> Result<Formula> {
    let f = formula(path, text, n)?;
    if !is_syntactically_persistent(&f) {
        return Err(err(path, format!("`{f}` is not syntactically persistent")));
    }
    Ok(f)
}

/// Context for expanding hap templates in one round.
struct Expander<'a> {
    joint: &'a JointProtocol,
    n: usize,
    t: usize,
}

impl Expander<'_> {
    /// Expands `$t` and `@recv_now/@recv_late/@recv_any(j[,i])` macros.
    /// `owner` is the receiver when the macro omits it.
    fn expand(&self, path: &str, text: &str, owner: Option<AgentId>) -> Result<Vec<GlobalHap>> {
        let text = text.replace("$t", &self.t.to_string());
        let Some(rest) = text.trim().strip_prefix('@') else {
            let h: GlobalHap = text.parse().map_err(|e: Error| err(path, e.to_string()))?;
            return Ok(vec![h]);
        };
        let (head, args) = rest
            .strip_suffix(')')
            .and_then(|r| r.split_once('('))
            .ok_or_else(|| err(path, format!("malformed macro `@{rest}`")))?;
        let ids: Vec<usize> = args
            .split(',')
            .map(|a| a.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| err(path, format!("macro `@{rest}` expects agent ids")))?;
        let (sender, receiver) = match (ids.as_slice(), owner) {
            ([j], Some(i)) => (*j, i.index()),
            ([j, i], _) => (*j, *i),
            _ => return Err(err(path, format!("macro `@{rest}` needs a sender and a receiver"))),
        };
        for id in [sender, receiver] {
            if id == 0 || id > self.n {
                return Err(err(path, format!("agent {id} out of range 1..={}", self.n)));
            }
        }
        let (sender, receiver) = (AgentId::new(sender), AgentId::new(receiver));
        let stamps: Vec<usize> = match head {
            "recv_now" => vec![self.t],
            "recv_late" => self.t.checked_sub(1).into_iter().collect(),
            "recv_any" => (0..=self.t).collect(),
            other => return Err(err(path, format!("unknown macro `@{other}`"))),
        };
        let mut out = Vec::new();
        for a in self.joint.emittable(sender) {
            if let Hap::Send { to, msg, copy } = a {
                if *to == receiver {
                    for &sent_at in &stamps {
                        out.push(GlobalHap::Deliver(Gmi {
                            sender,
                            receiver,
                            msg: msg.clone(),
                            copy: *copy,
                            sent_at,
                        }));
                    }
                }
            }
        }
        Ok(out)
    }

    fn set(&self, path: &str, items: &[String], owner: Option<AgentId>) -> Result<GlobalRound> {
        let mut out = GlobalRound::new();
        for (k, item) in items.iter().enumerate() {
            let p = format!("{path}[{k}]");
            for h in self.expand(&p, item, owner)? {
                if let Some(i) = owner {
                    if h.owner() != i {
                        return Err(err(p, format!("`{h}` belongs to agent {}, not {i}", h.owner())));
                    }
                }
                if h.owner().index() > self.n {
                    return Err(err(p, format!("`{h}` names an agent beyond n = {}", self.n)));
                }
                out.insert(h);
            }
        }
        Ok(out)
    }

    fn coherent(&self, path: &str, set: GlobalRound) -> Result<GlobalRound> {
        match coherence_violation(&set, self.t) {
            Some(why) => Err(err(path, format!("event set is not {}-coherent: {why}", self.t))),
            None => Ok(set),
        }
    }

    fn menu(&self, path: &str, menu: &RawMenu) -> Result<Vec<GlobalRound>> {
        match menu {
            RawMenu::Sets(sets) => sets
                .iter()
                .enumerate()
                .map(|(k, s)| {
                    let p = format!("{path}.sets[{k}]");
                    let set = self.set(&p, s, None)?;
                    self.coherent(&p, set)
                })
                .collect(),
            RawMenu::Subsets(base) => {
                let p = format!("{path}.subsets");
                let base: Vec<GlobalHap> = self.set(&p, base, None)?.into_iter().collect();
                if base.len() > MAX_SUBSET_BASE {
                    return Err(err(p, format!("{} haps exceed the limit of {MAX_SUBSET_BASE}", base.len())));
                }
                Ok((0u32..1 << base.len())
                    .map(|mask| {
                        base.iter()
                            .enumerate()
                            .filter(|(k, _)| mask >> k & 1 == 1)
                            .map(|(_, h)| h.clone())
                            .collect::<GlobalRound>()
                    })
                    .filter(|s| coherence_violation(s, self.t).is_none())
                    .collect())
            }
            RawMenu::PerAgent(pa) => self.per_agent(&format!("{path}.per_agent"), pa),
            RawMenu::Repeat { .. } => unreachable!("repeat is unrolled by the caller"),
        }
    }

    fn per_agent(&self, path: &str, pa: &RawPerAgent) -> Result<Vec<GlobalRound>> {
        let mut menus: BTreeMap<AgentId, &RawAgentMenu> = BTreeMap::new();
        for (key, m) in &pa.agents {
            let p = format!("{path}.agents.{key}");
            let i = key
                .parse::<usize>()
                .ok()
                .filter(|&i| (1..=self.n).contains(&i))
                .ok_or_else(|| err(&p, format!("expected an agent id in 1..={}", self.n)))?;
            menus.insert(AgentId::new(i), m);
        }
        let mut per_agent: Vec<Vec<GlobalRound>> = Vec::new();
        for i in AgentId::all(self.n) {
            let p = format!("{path}.agents.{i}");
            let mut options: BTreeSet<GlobalRound> = BTreeSet::new();
            let mut alphabet: BTreeSet<GlobalHap> = BTreeSet::new();
            if let Some(m) = menus.get(&i) {
                for (k, o) in m.options.iter().enumerate() {
                    let op = format!("{p}.options[{k}]");
                    let set = self.set(&op, o, Some(i))?;
                    options.insert(self.coherent(&op, set)?);
                }
                let fp = format!("{p}.faults");
                for h in self.set(&fp, &m.faults, Some(i))? {
                    if !h.is_fault() {
                        return Err(err(&fp, format!("`{h}` is not a fault event")));
                    }
                    alphabet.insert(h);
                }
            }
            if options.is_empty() {
                options.insert(GlobalRound::new());
            }
            if pa.fault_mode == FaultMode::Closed {
                alphabet.insert(GlobalHap::fail(i));
                alphabet.extend(options.iter().flatten().filter(|h| h.is_fault()).cloned());
                close_options(&mut options, &alphabet, self.t);
            } else {
                for h in &alphabet {
                    options.insert(std::iter::once(h.clone()).collect());
                }
            }
            per_agent.push(options.into_iter().collect());
        }
        let size = per_agent.iter().try_fold(1usize, |acc, o| acc.checked_mul(o.len()));
        if size.is_none_or(|s| s > MAX_PRODUCT) {
            return Err(err(path, format!("product of per-agent options exceeds {MAX_PRODUCT}")));
        }
        let mut product = vec![GlobalRound::new()];
        for options in &per_agent {
            product = product
                .iter()
                .flat_map(|base| {
                    options.iter().map(move |o| {
                        let mut s = base.clone();
                        s.extend(o.iter().cloned());
                        s
                    })
                })
                .collect();
        }
        product.into_iter().map(|s| self.coherent(path, s)).collect()
    }
}

/// Closes one agent's options under the four closure operations, with
/// every other agent's part empty.
fn close_options(options: &mut BTreeSet<GlobalRound>, alphabet: &BTreeSet<GlobalHap>, t: usize) {
    let faults: Vec<&GlobalHap> = alphabet.iter().collect();
    options.insert(GlobalRound::new());
    for mask in 0u32..1 << faults.len().min(MAX_SUBSET_BASE) {
        let y: GlobalRound = faults
            .iter()
            .enumerate()
            .filter(|(k, _)| mask >> k & 1 == 1)
            .map(|(_, h)| (*h).clone())
            .collect();
        if coherence_violation(&y, t).is_none() {
            options.insert(y);
        }
    }
    loop {
        let mut grown = options.clone();
        let fail = faults
            .iter()
            .find(|h| matches!(h, GlobalHap::FakeAction { performed: None, recorded: None, .. }));
        for x in options.iter() {
            if let Some(fail) = fail {
                let mut y = x.clone();
                y.insert((*fail).clone());
                if coherence_violation(&y, t).is_none() {
                    grown.insert(y);
                }
            }
            grown.insert(x.iter().filter(|h| !h.is_fault()).cloned().collect());
        }
        if grown.len() == options.len() {
            return;
        }
        *options = grown;
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            err(if path == "." { "<root>".into() } else { path }, e.into_inner().to_string())
        })?;
        Scenario::build(raw)
    }

    fn build(raw: RawScenario) -> Result<Scenario> {
        let n = raw.agents;
        if n == 0 || n > MAX_AGENTS {
            return Err(err("agents", format!("expected 1..={MAX_AGENTS} agents, got {n}")));
        }
        if raw.f > n {
            return Err(err("f", format!("f = {} exceeds the number of agents {n}", raw.f)));
        }
        let initial_states = raw
            .initial_states
            .unwrap_or_else(|| vec![vec![Name::new("s0"); n]]);
        if initial_states.is_empty() {
            return Err(err("initial_states", "at least one initial global state is required"));
        }
        for (k, s) in initial_states.iter().enumerate() {
            if s.len() != n {
                return Err(err(
                    format!("initial_states[{k}]"),
                    format!("expected {n} local states, got {}", s.len()),
                ));
            }
        }

        let mut protocols = vec![AgentProtocol::default(); n];
        for (key, p) in raw.agent_protocols {
            let path = format!("agent_protocols.{key}");
            let i = key
                .parse::<usize>()
                .ok()
                .filter(|&i| (1..=n).contains(&i))
                .ok_or_else(|| err(&path, format!("expected an agent id in 1..={n}")))?;
            for set in p.rules.iter().flat_map(|r| r.offer.iter()).chain(&p.default) {
                for a in set {
                    if let Hap::Send { to, .. } = a {
                        agent_in(&path, *to, n)?;
                    }
                }
            }
            protocols[i - 1] = p;
        }

        let mut trust = TrustTable::new();
        for (k, e) in raw.trust_table.iter().enumerate() {
            let path = format!("trust_table[{k}]");
            for a in [e.from, e.to].iter().chain(&e.chain) {
                agent_in(&path, *a, n)?;
            }
            let f = persistent_formula(&format!("{path}.formula"), &e.formula, n)?;
            trust
                .insert(
                    e.from,
                    e.to,
                    e.msg.clone(),
                    TrustEntry {
                        formula: f,
                        chain: e.chain.clone(),
                    },
                )
                .map_err(|x| err(&path, x.to_string()))?;
        }
        let mut relays = Vec::new();
        for (k, r) in raw.relays.into_iter().enumerate() {
            let path = format!("relays[{k}]");
            for a in std::iter::once(&r.agent).chain(&r.to) {
                agent_in(&path, *a, n)?;
            }
            if r.max_len == 0 || r.max_len > n {
                return Err(err(format!("{path}.max_len"), format!("expected 1..={n}")));
            }
            relays.push(RelayFamily {
                agent: r.agent,
                formula: persistent_formula(&format!("{path}.formula"), &r.formula, n)?,
                prefix: r.prefix,
                to: r.to,
                max_len: r.max_len,
                origin: r.origin,
            });
        }
        let joint = JointProtocol::new(protocols, relays, trust, raw.f).map_err(|e| err("relays", e.to_string()))?;

        let mut rounds = Vec::new();
        for (k, m) in raw.env_protocol.iter().enumerate() {
            let (times, menu) = match m {
                RawMenu::Repeat { times, menu } => (*times, &**menu),
                other => (1, other),
            };
            if matches!(menu, RawMenu::Repeat { .. }) {
                return Err(err(format!("env_protocol[{k}]"), "nested repeat"));
            }
            for _ in 0..times {
                let x = Expander {
                    joint: &joint,
                    n,
                    t: rounds.len(),
                };
                let menu = x.menu(&format!("env_protocol[{k}]"), menu)?;
                if menu.is_empty() {
                    return Err(err(format!("env_protocol[{k}]"), "menu offers no event set"));
                }
                rounds.push(menu);
            }
        }
        let env = EnvProtocol::new(rounds).map_err(|e| err("env_protocol", e.to_string()))?;

        let mut propositions = BTreeMap::new();
        for (name, text) in &raw.propositions {
            let path = format!("propositions.{name}");
            let f = formula(&path, text, n)?;
            if !f.props().is_empty() {
                return Err(err(path, "propositions may not refer to other propositions"));
            }
            propositions.insert(Name::new(name), f);
        }
        for (k, q) in raw.queries.iter().enumerate() {
            let path = format!("queries[{k}]");
            if q.k == 0 || q.k + raw.f > n {
                return Err(err(path, format!("need 1 <= k and k + f <= n, got k = {}", q.k)));
            }
        }

        Ok(Scenario {
            name: raw.name,
            description: raw.description,
            context: AgentContext {
                env,
                joint,
                initial_states,
                template: match raw.template {
                    RawTemplate::B => Template::B,
                    RawTemplate::Bf => Template::Bf(raw.f),
                },
                horizon: raw.horizon,
            },
            propositions,
            adversary: raw.adversary,
            caps: raw.caps,
            queries: raw.queries,
            oracle: raw.oracle,
        })
    }

    pub fn n(&self) -> usize {
        self.context.n()
    }

    pub fn f(&self) -> usize {
        self.context.joint.f()
    }

    /// Every round from the horizon on offers only the empty event set.
    pub fn quiescent(&self) -> bool {
        self.context.env.quiescent_from() <= self.context.horizon
    }

    pub fn closure_report(&self) -> ClosureReport {
        check_closure_properties(&self.context)
    }

    pub fn enumerate(&self, exec: Exec) -> Result<Enumeration> {
        enumerate_runs(&self.context, exec, self.caps.nodes)
    }

    /// The interpreted system over `runs`, with propositions valuated by
    /// their defining formulas.
    pub fn system(&self, runs: Vec<Run>, exec: Exec) -> Result<InterpretedSystem> {
        let mut valuation = Valuation::new();
        if !self.propositions.is_empty() {
            let plain = InterpretedSystem::new(runs.clone(), Valuation::new(), exec)?;
            for (name, f) in &self.propositions {
                let v = plain.eval_all(f)?;
                let points: BTreeSet<Point> = plain.points().zip(v.iter()).filter(|(_, b)| **b).map(|(p, _)| p).collect();
                valuation.insert(name.clone(), points);
            }
        }
        Ok(InterpretedSystem::new(runs, valuation, exec)?.with_quiescent(self.quiescent()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "minimal",
        "agents": 2,
        "f": 0,
        "horizon": 1,
        "agent_protocols": {"1": {"default": [["send(2,m)"]]}},
        "env_protocol": [{"sets": [["go(1)"], ["go(1)", "go(2)", "@recv_now(1,2)"]]}]
    }"#;

    #[test]
    fn minimal_loads() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.n(), 2);
        let menu = s.context.env.menu(0);
        assert_eq!(menu.len(), 2);
        assert!(menu.iter().any(|x| x.contains(&"grecv<1,2,m,0,0>".parse().unwrap())));
        assert!(s.quiescent());
    }

    fn path_of(text: &str) -> String {
        match Scenario::from_json(text) {
            Err(Error::Scenario { path, .. }) => path,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coherence_is_checked_with_location() {
        let bad = MINIMAL.replace(r#"["go(1)"], "#, r#"["go(1)", "hib(1)"], "#);
        assert_eq!(path_of(&bad), "env_protocol[0].sets[0]");
    }

    #[test]
    fn schema_errors_have_locations() {
        assert_eq!(path_of(&MINIMAL.replace("\"f\": 0", "\"f\": 3")), "f");
        let bad = MINIMAL.replace("send(2,m)", "sned(2,m)");
        assert!(path_of(&bad).starts_with("agent_protocols.1.default"));
        let bad = MINIMAL.replace("\"horizon\"", "\"horizn\"");
        assert_eq!(path_of(&bad), "horizn");
    }

    #[test]
    fn trust_formulas_must_be_persistent() {
        let bad = MINIMAL.replace(
            "\"env_protocol\"",
            r#""trust_table": [{"from": 1, "to": 2, "msg": "m", "formula": "correct(1)"}], "env_protocol""#,
        );
        assert_eq!(path_of(&bad), "trust_table[0].formula");
    }

    #[test]
    fn per_agent_closed_menus_are_closed() {
        let text = r#"{
            "name": "closed", "agents": 2, "f": 1, "horizon": 1,
            "env_protocol": [{"per_agent": {"agents": {
                "1": {"options": [["go(1)"]], "faults": ["sleep(1)"]},
                "2": {"options": [["go(2)"]]}
            }, "fault_mode": "closed"}}]
        }"#;
        let s = Scenario::from_json(text).unwrap();
        let r = s.closure_report();
        assert!(r.all_hold(), "{r:?}");
    }

    #[test]
    fn repeat_substitutes_round() {
        let text = r#"{
            "name": "rep", "agents": 2, "f": 1, "horizon": 2,
            "env_protocol": [{"repeat": {"times": 2, "menu": {"sets": [["fake(1, gsend<1,2,x,0,$t> -> noop)"]]}}}]
        }"#;
        let s = Scenario::from_json(text).unwrap();
        assert!(s.context.env.menu(1)[0].contains(&"fake(1, gsend<1,2,x,0,1> -> noop)".parse().unwrap()));
    }
}
