//! Scenario files, simulation drivers, JSONL traces and oracle-backed
//! verification.
//!
//! A scenario is a JSON document:
//!
//! ```json
//! {
//!   "name": "notify",
//!   "agents": 3,
//!   "f": 1,
//!   "template": "bf",
//!   "horizon": 2,
//!   "initial_states": [["s0", "s0", "s0"]],
//!   "agent_protocols": { "2": { "rules": [], "default": [["send(1,m)"]] } },
//!   "env_protocol": [
//!     { "sets": [["go(2)"], ["go(2)", "fail(2)"]] },
//!     { "per_agent": { "agents": { "1": { "options": [["go(1)", "@recv_late(2)"]] } } } }
//!   ],
//!   "trust_table": [{ "from": 2, "to": 1, "msg": "m", "formula": "faulty(2)", "chain": [] }],
//!   "relays": [],
//!   "propositions": { "sent": "happened(2,send(1,m))" },
//!   "adversary": { "mode": "seeded", "seed": 7 },
//!   "caps": { "nodes": 1000000 },
//!   "queries": [{ "hap": "ext(o)", "k": 1 }],
//!   "oracle": true
//! }
//! ```
//!
//! Event strings use the global hap syntax; `$t` is replaced by the round
//! number, and `@recv_now(j,i)`, `@recv_late(j,i)`, `@recv_any(j,i)` expand
//! to deliveries to `i` of everything `j` can send to `i`, stamped this
//! round, the previous round, or any round so far. Inside `per_agent` the
//! receiver may be omitted.

mod scenario;
mod trace;
mod verify;

pub use scenario::{Adversary, Caps, Mode, Query, Scenario};
pub use trace::{Trace, TraceHeader, TracedRun, TRACE_FORMAT, TRACE_VERSION};
pub use verify::{cross_check, detect_all, oracle_check, CrossCheck, DetectionRecord, QueryVerdict, Unsound, Verdict};

use crate::engine::simulate_seeded;
use crate::error::Result;
use crate::exec::Exec;

/// Runs the scenario's adversary (or `mode`/`seed` when given) and returns
/// the trace.
pub fn simulate(scenario: &Scenario, mode: Mode, seed: u64, exec: Exec) -> Result<Trace> {
    match mode {
        Mode::Seeded => {
            let run = simulate_seeded(&scenario.context, seed)?.run;
            Ok(Trace::from_runs(scenario, mode, Some(seed), &[run]))
        }
        Mode::Enumerate => {
            let e = scenario.enumerate(exec)?;
            Ok(Trace::from_runs(scenario, mode, None, &e.runs))
        }
    }
}

/// Warnings a validated scenario may still deserve.
pub fn warnings(scenario: &Scenario) -> Vec<String> {
    let mut out = Vec::new();
    for a in scenario.closure_report().agents {
        if let Some(c) = a.counterexample {
            out.push(format!("event menus are not closed for agent {}: {c}", a.agent));
        } else if !a.gullible_exhaustive {
            out.push(format!(
                "fault alphabet of agent {} too large, only small subsets were checked",
                a.agent
            ));
        }
    }
    if !scenario.quiescent() {
        out.push(format!(
            "environment is active until round {} but the horizon is {}; modal formulas are evaluated on a truncated system",
            scenario.context.env.quiescent_from(),
            scenario.context.horizon
        ));
    }
    out
}
