//! End-to-end acceptance gate. Prints one line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::error::Error as StdError;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use byzlab::detection::{belief_who_is_faulty, DetectionInput};
use byzlab::epistemics::{is_syntactically_persistent, Formula, InterpretedSystem, Point};
use byzlab::hopechain::{extract_chains, extract_chains_all, max_disjoint, threshold_belief, ChainSet, HopeChain};
use byzlab::model::{DesignatedAtom, Hap, LocalHistory, Name, Run};
use byzlab::sim::{self, DetectionRecord, Mode, Scenario, Trace};
use byzlab::{AgentId, AgentSet, Exec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, Box<dyn StdError>>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Loaded {
    scenario: Scenario,
    runs: Vec<Run>,
    system: InterpretedSystem,
    records: Vec<DetectionRecord>,
}

impl Loaded {
    fn point(&self, r: &DetectionRecord) -> Point {
        Point { run: r.run, t: r.time }
    }

    fn history(&self, r: &DetectionRecord) -> &LocalHistory {
        self.runs[r.run].at(r.time).local(r.agent)
    }
}

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn scenario_files() -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenario directory")
        .map(|e| e.expect("directory entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
}

fn load_all() -> Result<Vec<Loaded>, Box<dyn StdError>> {
    scenario_files()
        .into_iter()
        .map(|path| {
            let scenario = Scenario::load(&path)?;
            let runs = scenario.enumerate(Exec::Parallel)?.runs;
            let system = scenario.system(runs.clone(), Exec::Parallel)?;
            let records = sim::detect_all(&scenario, &runs, Exec::Parallel)?;
            Ok(Loaded {
                scenario,
                runs,
                system,
                records,
            })
        })
        .collect()
}

/// `H_{s1} … H_{sk} φ` built from scratch.
fn hopes(seq: &[AgentId], phi: &Formula) -> Formula {
    seq.iter()
        .rev()
        .fold(phi.clone(), |acc, &a| Formula::hope(a, acc))
}

/// Removes the segment between the first repeated agent's two occurrences,
/// keeping one of them.
fn shorten(seq: &[AgentId]) -> Option<Vec<AgentId>> {
    for q in 0..seq.len() {
        if let Some(p) = seq[..q].iter().position(|&a| a == seq[q]) {
            let mut out = seq[..p].to_vec();
            out.extend_from_slice(&seq[q..]);
            return Some(out);
        }
    }
    None
}

fn fail(msg: String) -> Box<dyn StdError> {
    msg.into()
}

fn believes(l: &Loaded, r: &DetectionRecord, phi: Formula) -> Result<bool, Box<dyn StdError>> {
    Ok(l.system.eval(l.point(r), &Formula::believe(r.agent, phi))?)
}

fn soundness(suite: &[Loaded], elapsed: Duration) -> Outcome {
    let start = Instant::now();
    let mut claims = 0;
    for l in suite {
        for r in &l.records {
            for j in r.faulty.iter() {
                claims += 1;
                if !believes(l, r, Formula::faulty(j))? {
                    return Err(fail(format!(
                        "{}: agent {} at {}:{} claims {j} faulty without belief",
                        l.scenario.name, r.agent, r.run, r.time
                    )));
                }
            }
            if !r.revalidated {
                return Err(fail(format!("{}: provenance fails to re-validate", l.scenario.name)));
            }
        }
    }
    let total = elapsed + start.elapsed();
    if suite.len() < 10 {
        return Err(fail(format!("only {} scenarios", suite.len())));
    }
    if total > Duration::from_secs(300) {
        return Err(fail(format!("took {total:?}")));
    }
    if claims == 0 {
        return Err(fail("no fault claims to check".into()));
    }
    Ok(format!("{claims} claims over {} scenarios in {total:.2?}", suite.len()))
}

fn cap(suite: &[Loaded]) -> Outcome {
    let mut checked = 0;
    for l in suite {
        for r in &l.records {
            if l.system.eval(l.point(r), &Formula::correct(r.agent))? {
                checked += 1;
                if r.faulty.len() > l.scenario.f() {
                    return Err(fail(format!(
                        "{}: correct agent {} believes {} faulty with f = {}",
                        l.scenario.name,
                        r.agent,
                        r.faulty,
                        l.scenario.f()
                    )));
                }
            }
        }
    }
    Ok(format!("{checked} correct-agent points"))
}

fn termination(suite: &[Loaded]) -> Outcome {
    let mut worst = 0;
    for l in suite {
        for r in &l.records {
            worst = worst.max(r.iterations);
            if r.iterations > l.scenario.n() + 1 {
                return Err(fail(format!("{}: {} iterations", l.scenario.name, r.iterations)));
            }
        }
    }
    Ok(format!("at most {worst} passes"))
}

struct FormulaGen<'a> {
    rng: ChaCha8Rng,
    n: usize,
    haps: &'a [Hap],
    states: &'a [Name],
}

impl FormulaGen<'_> {
    fn agent(&mut self) -> AgentId {
        AgentId::new(self.rng.random_range(1..=self.n))
    }

    fn hap(&mut self) -> Hap {
        self.haps[self.rng.random_range(0..self.haps.len())].clone()
    }

    fn atom(&mut self) -> Formula {
        use DesignatedAtom::*;
        match self.rng.random_range(0..8) {
            0 => Formula::True,
            1 => Formula::False,
            2 | 3 => Formula::faulty(self.agent()),
            4 => Formula::Atom(Occurred {
                agent: self.agent(),
                hap: self.hap(),
            }),
            5 => Formula::Atom(OccCAny(self.hap())),
            6 => Formula::Atom(OccC {
                agent: self.agent(),
                hap: self.hap(),
            }),
            _ => {
                let state = self.states[self.rng.random_range(0..self.states.len())].clone();
                Formula::Atom(Init {
                    agent: self.agent(),
                    state,
                })
            }
        }
    }

    /// Mostly persistent shapes, with occasional negation so the syntactic
    /// filter has something to reject.
    fn formula(&mut self, depth: usize) -> Formula {
        if depth == 0 {
            return self.atom();
        }
        let d = depth - 1;
        match self.rng.random_range(0..10) {
            0 => self.atom(),
            1 => Formula::and(self.formula(d), self.formula(d)),
            2 => Formula::or(self.formula(d), self.formula(d)),
            3 => Formula::implies(Formula::correct(self.agent()), self.formula(d)),
            4 => Formula::know(self.agent(), self.formula(d)),
            5 => Formula::believe(self.agent(), self.formula(d)),
            6 => Formula::hope(self.agent(), self.formula(d)),
            7 => Formula::always(self.formula(d)),
            8 => Formula::negate(self.formula(d)),
            _ => Formula::implies(self.formula(d), self.formula(d)),
        }
    }
}

fn persistence(suite: &[Loaded]) -> Outcome {
    let mut rejected = 0;
    let mut evaluated = 0;
    for (k, l) in suite.iter().enumerate() {
        let mut haps: BTreeSet<Hap> = BTreeSet::new();
        let mut states: BTreeSet<Name> = BTreeSet::new();
        for run in &l.runs {
            for i in AgentId::all(l.scenario.n()) {
                let h = run.last().local(i);
                haps.extend(h.haps().cloned());
                states.insert(h.initial().clone());
            }
        }
        haps.insert(Hap::External(Name::new("never")));
        let haps: Vec<Hap> = haps.into_iter().collect();
        let states: Vec<Name> = states.into_iter().collect();
        let mut g = FormulaGen {
            rng: ChaCha8Rng::seed_from_u64(0x5eed + k as u64),
            n: l.scenario.n(),
            haps: &haps,
            states: &states,
        };
        let mut accepted = 0;
        while accepted < 50 {
            let depth = g.rng.random_range(1..=3);
            let phi = g.formula(depth);
            if !is_syntactically_persistent(&phi) {
                rejected += 1;
                continue;
            }
            accepted += 1;
            evaluated += 1;
            if let Some(v) = l.system.verify_persistent(&phi)? {
                return Err(fail(format!(
                    "{}: `{phi}` holds at {}:{} but not at time {}",
                    l.scenario.name, v.run, v.t, v.later
                )));
            }
        }
    }
    Ok(format!(
        "{evaluated} formulas (50 per system), {rejected} generated candidates rejected as non-persistent"
    ))
}

fn receipts(suite: &[Loaded]) -> Outcome {
    let mut checked = 0;
    for l in suite {
        let trust = l.scenario.context.joint.trust();
        for r in &l.records {
            for hap in l.history(r).haps() {
                let Hap::Recv { from, msg } = hap else { continue };
                let Some(e) = trust.get(*from, r.agent, msg) else { continue };
                checked += 1;
                if !believes(l, r, Formula::hope(*from, hopes(&e.chain, &e.formula)))? {
                    return Err(fail(format!(
                        "{}: agent {} at {}:{} received `{msg}` from {from} without belief",
                        l.scenario.name, r.agent, r.run, r.time
                    )));
                }
            }
        }
    }
    if checked == 0 {
        return Err(fail("no trustworthy receipts in the suite".into()));
    }
    Ok(format!("{checked} receipt checks"))
}

fn trust_formulas(l: &Loaded) -> Vec<Formula> {
    l.scenario
        .context
        .joint
        .trust()
        .formulas()
        .into_iter()
        .cloned()
        .collect()
}

fn chains(suite: &[Loaded]) -> Outcome {
    let mut checked = 0;
    let mut loops = 0;
    for l in suite {
        let trust = l.scenario.context.joint.trust();
        for phi in trust_formulas(l) {
            for r in &l.records {
                for c in extract_chains_all(l.history(r), r.agent, &phi, trust) {
                    checked += 1;
                    if !believes(l, r, hopes(c.agents(), &phi))? {
                        return Err(fail(format!("{}: chain {c} for `{phi}` unsound", l.scenario.name)));
                    }
                    let mut seq = c.agents().to_vec();
                    while let Some(short) = shorten(&seq) {
                        loops += 1;
                        if !believes(l, r, hopes(&short, &phi))? {
                            return Err(fail(format!(
                                "{}: chain {c} for `{phi}` does not shorten to {short:?}",
                                l.scenario.name
                            )));
                        }
                        seq = short;
                    }
                }
            }
        }
    }
    if loops == 0 {
        return Err(fail("no chain with a loop in the suite".into()));
    }
    Ok(format!("{checked} chains, {loops} loop removals"))
}

fn threshold(suite: &[Loaded]) -> Outcome {
    let mut fired = 0;
    for l in suite {
        let trust = l.scenario.context.joint.trust();
        let f = l.scenario.f();
        for r in &l.records {
            if r.faulty.len() > f {
                continue;
            }
            let mut verified = true;
            for j in r.faulty.iter() {
                verified &= believes(l, r, Formula::faulty(j))?;
            }
            if !verified {
                continue;
            }
            for phi in trust_formulas(l) {
                let cs = extract_chains(l.history(r), r.agent, &phi, trust);
                if threshold_belief(&cs, r.faulty, f)? {
                    fired += 1;
                    if !believes(l, r, phi.clone())? {
                        return Err(fail(format!(
                            "{}: threshold fires for `{phi}` at {}:{} agent {} without belief",
                            l.scenario.name, r.run, r.time, r.agent
                        )));
                    }
                }
            }
        }
    }
    if fired == 0 {
        return Err(fail("threshold never fired".into()));
    }
    Ok(format!("fired at {fired} (point, agent, formula) triples"))
}

fn occurrence(suite: &[Loaded]) -> Outcome {
    let mut confirmed: BTreeMap<usize, usize> = BTreeMap::new();
    let mut relayed = 0;
    for l in suite.iter().filter(|l| !l.scenario.queries.is_empty()) {
        for r in &l.records {
            for q in r.queries.iter().filter(|q| q.verdict == Some(true)) {
                let phi = Formula::group_occurrence(l.scenario.n(), q.k, &q.hap);
                if !believes(l, r, phi)? {
                    return Err(fail(format!(
                        "{}: ({}, k = {}) at {}:{} agent {} not confirmed",
                        l.scenario.name, q.hap, q.k, r.run, r.time, r.agent
                    )));
                }
                *confirmed.entry(q.k).or_default() += 1;
                if l.scenario.name == "group_relay" && r.agent == AgentId::new(1) {
                    relayed += 1;
                }
            }
        }
    }
    for k in [1, 2] {
        if !confirmed.contains_key(&k) {
            return Err(fail(format!("no positive verdict for k = {k}")));
        }
    }
    if relayed == 0 {
        return Err(fail("relayed group belief never reached agent 1".into()));
    }
    Ok(format!(
        "confirmed {} verdicts for k = 1, {} for k = 2, {relayed} via relayed group belief",
        confirmed[&1], confirmed[&2]
    ))
}

fn local_knowledge(suite: &[Loaded]) -> Outcome {
    let mut checked = 0;
    for l in suite {
        for r in &l.records {
            for hap in l.history(r).haps() {
                checked += 1;
                let phi = Formula::know(
                    r.agent,
                    Formula::Atom(DesignatedAtom::Occurred {
                        agent: r.agent,
                        hap: hap.clone(),
                    }),
                );
                if !l.system.eval(l.point(r), &phi)? {
                    return Err(fail(format!("{}: `{phi}` fails at {}:{}", l.scenario.name, r.run, r.time)));
                }
            }
        }
    }
    Ok(format!("{checked} (point, agent, hap) checks"))
}

fn brute_force(masks: &[u64]) -> usize {
    let mut best = 0;
    for pick in 0u32..1 << masks.len() {
        let mut used = 0u64;
        let mut ok = true;
        for (k, m) in masks.iter().enumerate() {
            if pick >> k & 1 == 1 {
                ok &= used & m == 0;
                used |= m;
            }
        }
        if ok {
            best = best.max(pick.count_ones() as usize);
        }
    }
    best
}

fn packing() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..200 {
        let agents = rng.random_range(3..=10usize);
        let size = rng.random_range(0..=12usize);
        let mut set = ChainSet::new();
        while set.len() < size {
            let len = rng.random_range(1..=agents.min(4));
            let mut pool: Vec<usize> = (1..=agents).collect();
            let mut seq = Vec::new();
            for _ in 0..len {
                seq.push(AgentId::new(pool.swap_remove(rng.random_range(0..pool.len()))));
            }
            set.insert(HopeChain::new(seq));
        }
        let masks: Vec<u64> = set
            .iter()
            .map(|c| c.agents().iter().fold(0u64, |m, a| m | 1 << a.index()))
            .collect();
        let expected = brute_force(&masks);
        let got = max_disjoint(&set, 64)?;
        let mut used = AgentSet::EMPTY;
        for c in &got.witness {
            if !set.contains(c) || !c.agent_set().is_disjoint(used) {
                return Err(fail(format!("case {case}: invalid witness {:?}", got.witness)));
            }
            used = used.union(c.agent_set());
        }
        if got.size != expected || got.witness.len() != expected {
            return Err(fail(format!("case {case}: solver {} vs exhaustive {expected}", got.size)));
        }
    }
    let took = start.elapsed();
    if took > Duration::from_secs(60) {
        return Err(fail(format!("took {took:?}")));
    }
    Ok(format!("200 chain sets match exhaustive search in {took:.2?}"))
}

fn determinism(suite: &[Loaded]) -> Outcome {
    for l in suite {
        let s = &l.scenario;
        let seed = if s.adversary.mode == Mode::Seeded { s.adversary.seed } else { 7 };
        let a = sim::simulate(s, Mode::Seeded, seed, Exec::Parallel)?.to_jsonl();
        let b = sim::simulate(s, Mode::Seeded, seed, Exec::Sequential)?.to_jsonl();
        let c = sim::simulate(s, Mode::Seeded, seed, Exec::Parallel)?.to_jsonl();
        if a != b || a != c {
            return Err(fail(format!("{}: seeded traces differ", s.name)));
        }
        let e1 = sim::simulate(s, Mode::Enumerate, 0, Exec::Parallel)?.to_jsonl();
        let e2 = sim::simulate(s, Mode::Enumerate, 0, Exec::Sequential)?.to_jsonl();
        if e1 != e2 {
            return Err(fail(format!("{}: enumeration order differs", s.name)));
        }
        if Trace::parse(&e1)?.replay(s)? != l.runs {
            return Err(fail(format!("{}: replay differs from the enumerated runs", s.name)));
        }
        let d = sim::detect_all(s, &l.runs, Exec::Sequential)?;
        if d != l.records {
            return Err(fail(format!("{}: detection differs between modes", s.name)));
        }
    }
    Ok(format!("{} scenarios, seeded and enumerated traces stable", suite.len()))
}

fn permutations(items: &[AgentId]) -> Vec<Vec<AgentId>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

fn confluence(suite: &[Loaded]) -> Outcome {
    let mut histories = 0;
    let mut findings = Vec::new();
    for l in suite.iter().filter(|l| l.scenario.n() <= 4) {
        let joint = &l.scenario.context.joint;
        let orders = permutations(&AgentId::all(l.scenario.n()).collect::<Vec<_>>());
        let mut seen: HashMap<(AgentId, &LocalHistory), ()> = HashMap::new();
        for r in &l.records {
            let h = l.history(r);
            if seen.insert((r.agent, h), ()).is_some() {
                continue;
            }
            histories += 1;
            for order in &orders {
                let input = DetectionInput::new(h, r.agent, joint).with_order(order.clone());
                let got = belief_who_is_faulty(&input)?.faulty;
                if got != r.faulty {
                    findings.push(format!(
                        "{}: agent {} order {order:?} gives {got} instead of {}",
                        l.scenario.name, r.agent, r.faulty
                    ));
                    break;
                }
            }
        }
    }
    if findings.is_empty() {
        Ok(format!("{histories} distinct histories, every candidate order agrees"))
    } else {
        Ok(format!(
            "order-dependent result found ({} histories), first: {}",
            findings.len(),
            findings[0]
        ))
    }
}

fn main() {
    let start = Instant::now();
    let suite = match load_all() {
        Ok(s) => s,
        Err(e) => {
            println!("FAIL loading scenarios: {e}");
            std::process::exit(1);
        }
    };
    let loaded = start.elapsed();
    let criteria: Vec<Criterion<'_>> = vec![
        ("1 fault-belief soundness", Box::new(|| soundness(&suite, loaded))),
        ("2 believed-faulty cap", Box::new(|| cap(&suite))),
        ("3 fixpoint termination", Box::new(|| termination(&suite))),
        ("4 persistence", Box::new(|| persistence(&suite))),
        ("5 trustworthy receipt", Box::new(|| receipts(&suite))),
        ("6 chain soundness and shortening", Box::new(|| chains(&suite))),
        ("7 threshold belief", Box::new(|| threshold(&suite))),
        ("8 group occurrence", Box::new(|| occurrence(&suite))),
        ("9 local knowledge", Box::new(|| local_knowledge(&suite))),
        ("10 packing equivalence", Box::new(packing)),
        ("11 determinism", Box::new(|| determinism(&suite))),
        ("12 confluence probe", Box::new(|| confluence(&suite))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(e) => {
                failed += 1;
                println!("FAIL criterion {name}: {e}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
