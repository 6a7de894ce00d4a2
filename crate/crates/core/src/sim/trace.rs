use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::scenario::{Mode, Scenario};
use crate::agent::AgentId;
use crate::engine::{check_t_coherent, RoundRecord};
use crate::error::{Error, Result};
use crate::model::{GlobalHap, GlobalState, LocalHistory, Run, StateId};

pub const TRACE_FORMAT: &str = "byzlab-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub scenario: String,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub runs: usize,
    pub horizon: usize,
    pub agents: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TracedRun {
    pub initial: Vec<StateId>,
    pub rounds: Vec<RoundRecord>,
}

/// One line of a trace file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Header(TraceHeader),
    Run {
        run: usize,
        initial: Vec<StateId>,
    },
    Round {
        run: usize,
        #[serde(flatten)]
        record: RoundRecord,
    },
}

/// A replayable record of one or more runs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub runs: Vec<TracedRun>,
}

impl Trace {
    pub fn from_runs(scenario: &Scenario, mode: Mode, seed: Option<u64>, runs: &[Run]) -> Trace {
        Trace {
            header: TraceHeader {
                format: TRACE_FORMAT.into(),
                version: TRACE_VERSION,
                scenario: scenario.name.clone(),
                mode,
                seed,
                runs: runs.len(),
                horizon: scenario.context.horizon,
                agents: scenario.n(),
            },
            runs: runs
                .iter()
                .map(|r| TracedRun {
                    initial: r.at(0).locals.iter().map(|h| h.initial().clone()).collect(),
                    rounds: RoundRecord::from_run(r),
                })
                .collect(),
        }
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        let mut line = |l: &Line| -> Result<()> {
            serde_json::to_writer(&mut w, l)?;
            w.write_all(b"\n")?;
            Ok(())
        };
        line(&Line::Header(self.header.clone()))?;
        for (run, r) in self.runs.iter().enumerate() {
            line(&Line::Run {
                run,
                initial: r.initial.clone(),
            })?;
            for record in &r.rounds {
                line(&Line::Round {
                    run,
                    record: record.clone(),
                })?;
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("json is utf-8")
    }

    pub fn parse(text: &str) -> Result<Trace> {
        let mismatch = |k: usize, m: String| Error::TraceMismatch(format!("line {}: {m}", k + 1));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let header = match lines.next() {
            Some((k, l)) => match serde_json::from_str::<Line>(l).map_err(|e| mismatch(k, e.to_string()))? {
                Line::Header(h) => h,
                _ => return Err(mismatch(k, "expected a header line".into())),
            },
            None => return Err(Error::TraceMismatch("empty trace".into())),
        };
        if header.format != TRACE_FORMAT || header.version != TRACE_VERSION {
            return Err(mismatch(
                0,
                format!("unsupported trace format {} v{}", header.format, header.version),
            ));
        }
        let mut runs: Vec<TracedRun> = Vec::new();
        for (k, l) in lines {
            match serde_json::from_str::<Line>(l).map_err(|e| mismatch(k, e.to_string()))? {
                Line::Header(_) => return Err(mismatch(k, "repeated header".into())),
                Line::Run { run, initial } => {
                    if run != runs.len() {
                        return Err(mismatch(k, format!("run {run} out of order")));
                    }
                    runs.push(TracedRun {
                        initial,
                        rounds: Vec::new(),
                    });
                }
                Line::Round { run, record } => {
                    if run + 1 != runs.len() {
                        return Err(mismatch(k, format!("round for undeclared run {run}")));
                    }
                    let r = runs.last_mut().expect("checked above");
                    if record.t != r.rounds.len() {
                        return Err(mismatch(k, format!("round {} out of order", record.t)));
                    }
                    r.rounds.push(record);
                }
            }
        }
        if runs.len() != header.runs {
            return Err(Error::TraceMismatch(format!(
                "header announces {} runs, found {}",
                header.runs,
                runs.len()
            )));
        }
        Ok(Trace { header, runs })
    }

    /// Rebuilds the runs, checking every round against the scenario.
    pub fn replay(&self, scenario: &Scenario) -> Result<Vec<Run>> {
        let n = scenario.n();
        let ctx = &scenario.context;
        if self.header.agents != n || self.header.horizon != ctx.horizon {
            return Err(Error::TraceMismatch(format!(
                "trace has {} agents and horizon {}, scenario {} and {}",
                self.header.agents, self.header.horizon, n, ctx.horizon
            )));
        }
        let mut out = Vec::with_capacity(self.runs.len());
        for (k, r) in self.runs.iter().enumerate() {
            let bad = |m: String| Error::TraceMismatch(format!("run {k}: {m}"));
            if !ctx.initial_states.contains(&r.initial) {
                return Err(bad("initial state not declared by the scenario".into()));
            }
            if r.rounds.len() != ctx.horizon {
                return Err(bad(format!("{} rounds, expected {}", r.rounds.len(), ctx.horizon)));
            }
            let mut s = GlobalState::initial(r.initial.iter().cloned().map(LocalHistory::new).collect());
            let mut states = vec![Arc::new(s.clone())];
            for rec in &r.rounds {
                let t = rec.t;
                if rec.actions.len() != n {
                    return Err(bad(format!("round {t} lists {} action sets", rec.actions.len())));
                }
                if !check_t_coherent(&rec.events, t) {
                    return Err(bad(format!("events of round {t} are not coherent")));
                }
                for i in AgentId::all(n) {
                    let acts = &rec.actions[i.slot()];
                    if acts.is_empty() {
                        continue;
                    }
                    if !rec.events.contains(&GlobalHap::Go(i)) {
                        return Err(bad(format!("agent {i} acts in round {t} without go({i})")));
                    }
                    let mut local = std::collections::BTreeSet::new();
                    for a in acts {
                        match a {
                            GlobalHap::Action(x) if x.agent() == i && a.performed_send().is_none_or(|g| g.sent_at == t) => {
                                local.insert(x.localize());
                            }
                            _ => return Err(bad(format!("`{a}` is not an action of agent {i} in round {t}"))),
                        }
                    }
                    if !ctx.joint.offers(i, s.local(i))?.contains(&local) {
                        return Err(bad(format!("actions of agent {i} in round {t} are not offered")));
                    }
                }
                s = s.update(&rec.events, &rec.actions);
                states.push(Arc::new(s.clone()));
            }
            out.push(Run { states });
        }
        Ok(out)
    }
}
