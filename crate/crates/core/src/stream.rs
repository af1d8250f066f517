//! Line-delimited input stream and its replay driver.
//!
//! Each line is one JSON record. A plain sensor event (no `type` field) is
//! accepted as is; other records carry a `type` tag and an `at` timestamp.
//! Replay advances a simulated clock to each record's time.

use std::io::BufRead;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    AssessmentSubmission, AttendanceSubmission, Engine, EngineError, FulfillmentSubmission,
    SupervisionSubmission,
};
use crate::ingest::{HandlingReport, SensorEvent};
use crate::period::Period;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamRecord {
    Sensor(SensorEvent),
    Fulfillment {
        at: DateTime<Utc>,
        record: FulfillmentSubmission,
    },
    Supervision {
        at: DateTime<Utc>,
        record: SupervisionSubmission,
    },
    Attendance {
        at: DateTime<Utc>,
        record: AttendanceSubmission,
    },
    Assessment {
        at: DateTime<Utc>,
        record: AssessmentSubmission,
    },
    AlarmAck {
        at: DateTime<Utc>,
        case_id: String,
    },
    AlarmHandling {
        at: DateTime<Utc>,
        case_id: String,
        report: HandlingReport,
    },
    /// Advances the clock without input.
    Tick {
        at: DateTime<Utc>,
    },
}

impl StreamRecord {
    pub fn at(&self) -> DateTime<Utc> {
        match self {
            StreamRecord::Sensor(e) => e.observed_at,
            StreamRecord::Fulfillment { at, .. }
            | StreamRecord::Supervision { at, .. }
            | StreamRecord::Attendance { at, .. }
            | StreamRecord::Assessment { at, .. }
            | StreamRecord::AlarmAck { at, .. }
            | StreamRecord::AlarmHandling { at, .. }
            | StreamRecord::Tick { at } => *at,
        }
    }

    pub fn to_line(&self) -> String {
        match self {
            StreamRecord::Sensor(e) => serde_json::to_string(e),
            other => serde_json::to_string(other),
        }
        .expect("stream records serialize")
    }
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: {source}")]
    Engine { line: usize, source: EngineError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn parse_line(text: &str) -> Result<StreamRecord, serde_json::Error> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.get("type").is_some() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(StreamRecord::Sensor)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub lines: usize,
    pub appended: usize,
    pub duplicates: usize,
    pub rejected: Vec<Rejected>,
    pub closed_periods: Vec<Period>,
    pub notifications: usize,
}

/// Feeds one record at simulated time `max(clock, record time)` and ticks.
/// Returns whether a new entry was appended for the record itself.
pub fn feed(
    engine: &mut Engine,
    record: StreamRecord,
) -> Result<(bool, crate::engine::TickOutcome), EngineError> {
    let now = engine
        .state()
        .clock
        .map_or(record.at(), |c| c.max(record.at()));
    let before = engine.state().last_sequence;
    let fresh = match record {
        StreamRecord::Sensor(e) => !engine.ingest_event(e, now)?.duplicate,
        StreamRecord::Fulfillment { record, .. } => {
            !engine.submit_fulfillment(record, now)?.duplicate
        }
        StreamRecord::Supervision { record, .. } => {
            !engine.submit_supervision(record, now)?.duplicate
        }
        StreamRecord::Attendance { record, .. } => {
            !engine.submit_attendance(record, now)?.duplicate
        }
        StreamRecord::Assessment { record, .. } => {
            !engine.submit_assessment(record, now)?.duplicate
        }
        StreamRecord::AlarmAck { case_id, .. } => {
            engine.acknowledge_alarm(&case_id, now)?;
            engine.state().last_sequence > before
        }
        StreamRecord::AlarmHandling {
            case_id, report, ..
        } => {
            engine.record_handling(&case_id, report, now)?;
            engine.state().last_sequence > before
        }
        StreamRecord::Tick { .. } => false,
    };
    let tick = engine.tick(now)?;
    Ok((fresh, tick))
}

/// Replays a whole stream. Records the engine refuses (bad references,
/// conflicts) are reported and skipped; storage failures abort.
pub fn replay_stream(
    engine: &mut Engine,
    input: impl BufRead,
) -> Result<ReplaySummary, StreamError> {
    let mut summary = ReplaySummary::default();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        summary.lines += 1;
        let record = match parse_line(&line) {
            Ok(r) => r,
            Err(e) => {
                summary.rejected.push(Rejected {
                    line: line_no,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let is_tick = matches!(record, StreamRecord::Tick { .. });
        match feed(engine, record) {
            Ok((fresh, tick)) => {
                if fresh {
                    summary.appended += 1;
                } else if !is_tick {
                    summary.duplicates += 1;
                }
                summary.closed_periods.extend(tick.closed);
                summary.notifications += tick.dispatched;
            }
            Err(EngineError::Store(e)) => {
                return Err(StreamError::Engine {
                    line: line_no,
                    source: EngineError::Store(e),
                })
            }
            Err(e) => summary.rejected.push(Rejected {
                line: line_no,
                reason: e.to_string(),
            }),
        }
    }
    Ok(summary)
}
