use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use byzlab::epistemics::{Formula, Point};
use byzlab::sim::{self, Mode, Query, Scenario, Trace};
use byzlab::{Error, Exec};
use clap::{Args, Parser, Subcommand};

const EXIT_OTHER: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_CAP: u8 = 3;
const EXIT_UNSOUND: u8 = 4;

/// Simulate byzantine multi-agent runs and check fault detection against
/// an epistemic model checker.
#[derive(Debug, Parser)]
#[command(name = "byzlab", version)]
struct Cli {
    /// Upper bound on explored nodes during enumeration.
    #[arg(long, env = "BYZLAB_CAP", global = true)]
    cap: Option<u64>,

    /// Evaluate on a single thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a trace: one seeded run or every run.
    Simulate {
        scenario: PathBuf,
        #[arg(long, conflicts_with = "enumerate")]
        seed: Option<u64>,
        #[arg(long)]
        enumerate: bool,
        #[command(flatten)]
        out: Out,
    },
    /// Run fault and occurrence detection over every point of a trace.
    Detect {
        scenario: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Group occurrence question `HAP,K`, e.g. `ext(o),1`. Replaces the
        /// scenario's own queries.
        #[arg(long = "query", value_parser = parse_query)]
        queries: Vec<Query>,
        #[command(flatten)]
        out: Out,
    },
    /// Evaluate a formula over the enumerated system.
    Check {
        scenario: PathBuf,
        #[arg(long)]
        formula: String,
        /// Only evaluate at `RUN:TIME`.
        #[arg(long, value_parser = parse_point)]
        at: Option<Point>,
        /// Also check every detection claim against the oracle.
        #[arg(long)]
        against_detection: bool,
        #[command(flatten)]
        out: Out,
    },
    /// Load a scenario and report problems.
    Validate { scenario: PathBuf },
}

#[derive(Debug, Args)]
struct Out {
    /// Write records here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Out {
    fn open(&self) -> anyhow::Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

fn parse_query(s: &str) -> Result<Query, String> {
    let (hap, k) = s.rsplit_once(',').ok_or("expected HAP,K")?;
    Ok(Query {
        hap: hap.trim().parse().map_err(|e: Error| e.to_string())?,
        k: k.trim().parse().map_err(|_| format!("`{k}` is not a group size"))?,
        include_self: false,
    })
}

fn parse_point(s: &str) -> Result<Point, String> {
    let (run, t) = s.split_once(':').ok_or("expected RUN:TIME")?;
    Ok(Point {
        run: run.parse().map_err(|_| format!("`{run}` is not a run index"))?,
        t: t.parse().map_err(|_| format!("`{t}` is not a time"))?,
    })
}

/// An error together with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Scenario { .. } | Error::Parse { .. } | Error::TraceMismatch(_)) => EXIT_INVALID,
            Some(Error::CapExceeded { .. }) => EXIT_CAP,
            _ => EXIT_OTHER,
        };
        Failure { code, error }
    }
}

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn load(path: &Path, cap: Option<u64>) -> Result<Scenario, Failure> {
    let mut s = Scenario::load(path).map_err(|e| {
        let code = if matches!(e, Error::Io(_)) { EXIT_OTHER } else { EXIT_INVALID };
        Failure {
            code,
            error: anyhow::Error::new(e).context(path.display().to_string()),
        }
    })?;
    if let Some(c) = cap {
        s.caps.nodes = c;
    }
    Ok(s)
}

fn write_lines<T: serde::Serialize>(w: &mut dyn Write, items: &[T]) -> anyhow::Result<()> {
    for x in items {
        serde_json::to_writer(&mut *w, x)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Simulate {
            scenario,
            seed,
            enumerate,
            out,
        } => {
            let s = load(&scenario, cli.cap)?;
            let (mode, seed) = match (seed, enumerate) {
                (Some(seed), _) => (Mode::Seeded, seed),
                (None, true) => (Mode::Enumerate, 0),
                (None, false) => (s.adversary.mode, s.adversary.seed),
            };
            let trace = sim::simulate(&s, mode, seed, exec)?;
            let mut w = out.open()?;
            trace.write_jsonl(&mut w)?;
            w.flush()?;
        }
        Command::Detect {
            scenario,
            trace,
            queries,
            out,
        } => {
            let mut s = load(&scenario, cli.cap)?;
            if !queries.is_empty() {
                for q in &queries {
                    if q.k == 0 || q.k + s.f() > s.n() {
                        return Err(Failure {
                            code: EXIT_INVALID,
                            error: anyhow::anyhow!("query {},{} needs 1 <= k and k + f <= n", q.hap, q.k),
                        });
                    }
                }
                s.queries = queries;
            }
            let text = std::fs::read_to_string(&trace).with_context(|| format!("cannot read {}", trace.display()))?;
            let runs = Trace::parse(&text)?.replay(&s)?;
            let records = sim::detect_all(&s, &runs, exec)?;
            let mut w = out.open()?;
            write_lines(&mut w, &records)?;
            w.flush()?;
        }
        Command::Check {
            scenario,
            formula,
            at,
            against_detection,
            out,
        } => {
            let s = load(&scenario, cli.cap)?;
            let phi = Formula::parse_with(&formula, Some(s.n()))?;
            let runs = s.enumerate(exec)?.runs;
            let system = s.system(runs.clone(), exec)?;
            if let Some(w) = system.horizon_warning(&phi) {
                warn(w);
            }
            if let Some(p) = at {
                if p.run >= runs.len() || p.t > s.context.horizon {
                    return Err(Failure {
                        code: EXIT_OTHER,
                        error: anyhow::anyhow!(
                            "point {}:{} outside {} runs of horizon {}",
                            p.run,
                            p.t,
                            runs.len(),
                            s.context.horizon
                        ),
                    });
                }
            }
            let verdicts = sim::oracle_check(&system, &phi, at)?;
            let mut w = out.open()?;
            write_lines(&mut w, &verdicts)?;
            if against_detection {
                let records = sim::detect_all(&s, &runs, exec)?;
                let report = sim::cross_check(&s, &system, &records)?;
                write_lines(&mut w, &report.unsound)?;
                w.flush()?;
                eprintln!(
                    "{} claims checked, {} unsound",
                    report.claims,
                    report.unsound.len()
                );
                if !report.unsound.is_empty() {
                    return Err(Failure {
                        code: EXIT_UNSOUND,
                        error: anyhow::anyhow!("detection made {} unsound claims", report.unsound.len()),
                    });
                }
            }
            w.flush()?;
        }
        Command::Validate { scenario } => {
            let s = load(&scenario, cli.cap)?;
            for w in sim::warnings(&s) {
                warn(w);
            }
            let e = s.enumerate(exec)?;
            let points = e.runs.len() * (s.context.horizon + 1);
            println!(
                "{}: {} agents, f = {}, horizon {}, {} runs, {} points",
                s.name,
                s.n(),
                s.f(),
                s.context.horizon,
                e.runs.len(),
                points
            );
            if s.oracle {
                let system = s.system(e.runs, exec)?;
                let bad = system.verify_trust_table(&s.context.joint)?;
                if !bad.is_empty() {
                    for v in &bad {
                        eprintln!(
                            "error: {} sends `{}` to {} at {}:{} without believing {}",
                            v.sender, v.msg, v.receiver, v.point.run, v.point.t, v.formula
                        );
                    }
                    return Err(Failure {
                        code: EXIT_INVALID,
                        error: anyhow::anyhow!("trust table is not verified ({} violations)", bad.len()),
                    });
                }
                println!("trust table verified");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
