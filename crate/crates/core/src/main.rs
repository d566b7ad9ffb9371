use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use clocksim::clock::{extremum_analysis, ClockParameters};
use clocksim::scenario::{load_scenario, ScenarioError};
use clocksim::sync::SyncStatus;
use clocksim::trace::{self, MessageStatus};
use clocksim::{dot, metrics, SimTime};

#[derive(Parser)]
#[command(name = "clocksim", version, about = "Clock synchronization network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trace and metrics.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        /// JSONL trace output; omitted means no trace file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Metrics JSON output; defaults to stdout.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Exit with status 2 when a message is blocked or a sync aborts.
        #[arg(long)]
        strict: bool,
    },
    /// Locate the extremum of a quadratic clock offset.
    AnalyzeClock {
        #[arg(long, allow_hyphen_values = true)]
        beta: f64,
        #[arg(long, allow_hyphen_values = true)]
        gamma: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alpha0: f64,
    },
    /// Print the topology at a point in time as Graphviz DOT.
    ExportDot {
        #[arg(long)]
        scenario: PathBuf,
        /// Simulated seconds.
        #[arg(long, default_value_t = 0.0)]
        time: f64,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Compare two JSONL traces.
    DiffTrace { a: PathBuf, b: PathBuf },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn write_out(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run { scenario, seed, trace, metrics, strict } => {
            let s = load_scenario(&scenario)?;
            let mut engine = s.build_engine(seed).map_err(|e| Failure::Runtime(e.to_string()))?;
            engine.run_until(SimTime::from_secs(s.config.duration_s)).map_err(|e| Failure::Runtime(e.to_string()))?;
            if let Some(p) = trace {
                write_out(&p, &engine.trace_jsonl())?;
            }
            let report = metrics::metrics_report(engine.trace());
            let text = serde_json::to_string_pretty(&report).expect("metrics serialize") + "\n";
            match metrics {
                Some(p) => write_out(&p, &text)?,
                None => print!("{text}"),
            }
            eprintln!("trace sha256 {}", engine.trace_digest());
            if strict {
                if let Some(m) = engine.messages().find(|m| m.status == MessageStatus::Blocked) {
                    return Err(Failure::Runtime(format!("message {} from {} to {} was blocked", m.id, m.source, m.destination)));
                }
                if let Some(r) = engine.reports().find(|r| r.status == SyncStatus::Aborted) {
                    return Err(Failure::Runtime(format!(
                        "sync session {} aborted: {}",
                        r.session,
                        r.failure.as_deref().unwrap_or("unknown")
                    )));
                }
            }
        }
        Command::AnalyzeClock { beta, gamma, alpha0 } => {
            let p = ClockParameters::<f64>::quadratic(alpha0, beta, gamma);
            p.validate().map_err(|e| Failure::Validation(e.to_string()))?;
            let r = extremum_analysis(&p);
            let out = json!({
                "alpha0": alpha0,
                "beta": beta,
                "gamma": gamma,
                "has_extremum": r.has_extremum,
                "t_star": r.t_star,
                "classification": r.classification,
                "concavity": r.concavity,
                "offset_at_t_star": r.t_star.map(|t| p.model_offset(t)),
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
        }
        Command::ExportDot { scenario, time } => {
            let s = load_scenario(&scenario)?;
            if !(time >= 0.0 && time.is_finite()) {
                return Err(Failure::Validation(format!("time must be >= 0, got {time}")));
            }
            print!("{}", dot::export_graph(&s, SimTime::from_secs(time)));
        }
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario)?;
            println!(
                "ok: {} nodes, {} links, {} sync events, {} attacks",
                s.graph.nodes().len(),
                s.graph.links().len(),
                s.sync_schedule.len(),
                s.attacks.len()
            );
        }
        Command::DiffTrace { a, b } => {
            let read = |p: &Path| -> Result<Vec<trace::TraceRecord>, Failure> {
                let text = std::fs::read_to_string(p).map_err(|e| Failure::Validation(format!("cannot read {}: {e}", p.display())))?;
                trace::parse_jsonl(&text).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))
            };
            let (left, right) = (read(&a)?, read(&b)?);
            let d = trace::diff(&left, &right);
            let out = json!({
                "identical": d.identical,
                "left_records": d.left_records,
                "right_records": d.right_records,
                "first_difference": d.first_difference,
                "differing_records": d.differing_records,
                "left_sha256": trace::digest(trace::to_jsonl(&left).as_bytes()),
                "right_sha256": trace::digest(trace::to_jsonl(&right).as_bytes()),
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
