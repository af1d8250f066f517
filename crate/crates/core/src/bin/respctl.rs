//! Command-line front end for the responsibility engine.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use responsibility_engine::accountability::Incident;
use responsibility_engine::api::Service;
use responsibility_engine::engine::{ConfigSubmission, Engine, EngineError, Settings};
use responsibility_engine::model::{validate_enterprise, Enterprise, PositionId};
use responsibility_engine::notify::JsonlNotifier;
use responsibility_engine::period::Period;
use responsibility_engine::quantify::{run_quantification, PerformanceThreshold};
use responsibility_engine::stream::replay_stream;

const OUTBOX: &str = "outbox.jsonl";

#[derive(Parser)]
#[command(name = "respctl", version, about = "Responsibility management engine")]
struct Cli {
    /// Directory holding the event log, snapshots and notification outbox.
    #[arg(long, env = "RESPCTL_DATA_DIR", default_value = "data", global = true)]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Submits an enterprise configuration as the next version.
    Init {
        enterprise: PathBuf,
        /// Settings document (tuning, scoring, lead times); defaults apply otherwise.
        #[arg(long)]
        settings: Option<PathBuf>,
        /// Submission time; defaults to the current time.
        #[arg(long)]
        at: Option<DateTime<Utc>>,
    },
    /// Checks an enterprise configuration without touching the data directory.
    Validate { enterprise: PathBuf },
    /// Runs risk tuning, supervision generation and the performance loop.
    Quantify {
        /// Configuration to quantify; defaults to the current version.
        #[arg(long)]
        enterprise: Option<PathBuf>,
        /// JSON object of position id to period score.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        max_iterations: u32,
    },
    /// Feeds a line-delimited event file through the engine.
    Replay { event_file: PathBuf },
    /// Closes a period such as 2026-W11 or 2026-03.
    ClosePeriod {
        period: Period,
        #[arg(long)]
        at: Option<DateTime<Utc>>,
    },
    /// Prints rankings and score reports for a period.
    Report { period: Period },
    /// Computes the accountability ranking for an incident document.
    Accountability {
        incident_file: PathBuf,
        /// Also appends the incident to the log.
        #[arg(long)]
        record: bool,
    },
    /// Serves the HTTP API.
    Serve {
        #[arg(long, env = "RESPCTL_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Bearer token required on POST requests.
        #[arg(long, env = "RESPCTL_TOKEN")]
        token: Option<String>,
        #[arg(long, env = "RESPCTL_TICK_SECS", default_value_t = 30)]
        tick_secs: u64,
    },
}

type Failure = Box<dyn std::error::Error>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| format!("{}: {e}", path.display()).into())
}

fn print<T: Serialize>(value: &T) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(value)?) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn open_engine(dir: &Path) -> Result<Engine, Failure> {
    std::fs::create_dir_all(dir)?;
    let notifier = JsonlNotifier::open(dir.join(OUTBOX))?;
    Ok(Engine::open(dir, Box::new(notifier))?)
}

/// Current time for commands without an explicit `--at`: never earlier
/// than the engine's own clock.
fn now_for(engine: &Engine, at: Option<DateTime<Utc>>) -> DateTime<Utc> {
    at.unwrap_or_else(|| {
        engine
            .state()
            .clock
            .map_or_else(Utc::now, |c| c.max(Utc::now()))
    })
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Init {
            enterprise,
            settings,
            at,
        } => {
            let enterprise: Enterprise = read_json(&enterprise)?;
            let settings: Option<Settings> = settings.map(|p| read_json(&p)).transpose()?;
            let mut engine = open_engine(&cli.data_dir)?;
            let base_version = engine.state().config.as_ref().map(|c| c.version);
            let now = now_for(&engine, at);
            let receipt = engine.submit_config(
                ConfigSubmission {
                    base_version,
                    enterprise,
                    settings,
                },
                now,
            )?;
            print(&json!({"receipt": receipt, "version": engine.state().version()}))?;
        }
        Command::Validate { enterprise } => {
            let enterprise: Enterprise = read_json(&enterprise)?;
            let report = validate_enterprise(&enterprise);
            print(&report)?;
            if !report.is_valid() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Quantify {
            enterprise,
            scores,
            max_iterations,
        } => {
            let (ent, settings) = match enterprise {
                Some(p) => (read_json::<Enterprise>(&p)?, Settings::default()),
                None => {
                    let engine = open_engine(&cli.data_dir)?;
                    let config = engine
                        .state()
                        .config
                        .clone()
                        .ok_or(EngineError::NotConfigured)?;
                    (config.enterprise, config.settings)
                }
            };
            let mut scores: BTreeMap<PositionId, f64> = scores
                .map(|p| read_json(&p))
                .transpose()?
                .unwrap_or_default();
            let threshold = PerformanceThreshold {
                max_iterations,
                ..PerformanceThreshold::default()
            };
            let plan = run_quantification(&ent, &settings.tuning, &threshold, &mut scores)?;
            print(&plan.report)?;
        }
        Command::Replay { event_file } => {
            let mut engine = open_engine(&cli.data_dir)?;
            let file =
                File::open(&event_file).map_err(|e| format!("{}: {e}", event_file.display()))?;
            let summary = replay_stream(&mut engine, BufReader::new(file))?;
            print(&summary)?;
        }
        Command::ClosePeriod { period, at } => {
            let mut engine = open_engine(&cli.data_dir)?;
            let now = now_for(&engine, at);
            let closed = engine.close_period(period, now)?;
            print(&closed.rankings)?;
        }
        Command::Report { period } => {
            let engine = open_engine(&cli.data_dir)?;
            let state = engine.state();
            match state.closed.get(&period) {
                Some(closed) => print(closed)?,
                None => {
                    let ent = state.effective().ok_or(EngineError::NotConfigured)?;
                    let mut reports = BTreeMap::new();
                    for p in ent.positions() {
                        if let Ok(r) = state.score(&p.position_id, Some(period)) {
                            reports.insert(p.position_id.clone(), r);
                        }
                    }
                    print(&json!({"period": period, "closed": false, "reports": reports}))?;
                }
            }
        }
        Command::Accountability {
            incident_file,
            record,
        } => {
            let incident: Incident = read_json(&incident_file)?;
            let mut engine = open_engine(&cli.data_dir)?;
            if record {
                let now = now_for(&engine, None);
                engine.submit_incident(incident.clone(), now)?;
            }
            print(&engine.state().accountability(&incident)?)?;
        }
        Command::Serve {
            listen,
            token,
            tick_secs,
        } => {
            let engine = open_engine(&cli.data_dir)?;
            let service = Service::new(engine).with_token(token);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(responsibility_engine::http::serve(
                service,
                listen,
                Duration::from_secs(tick_secs.max(1)),
            ))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("respctl: {e}");
            ExitCode::FAILURE
        }
    }
}
