//! Append-only JSON-lines event log and state snapshots.
//!
//! Each entry is one line, written and fsynced before `append` returns. A
//! trailing line without its newline is a torn write and is cut off when the
//! log is reopened.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LogKind {
    Config,
    SensorEvent,
    Fulfillment,
    Supervision,
    Attendance,
    Assessment,
    AlarmTransition,
    PeriodClose,
    Notification,
    Incident,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub sequence: u64,
    pub kind: LogKind,
    pub body: serde_json::Value,
    pub appended_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt log at sequence {sequence}: {reason}")]
    CorruptLog { sequence: u64, reason: String },
    #[error("cannot encode entry: {0}")]
    Encode(#[from] serde_json::Error),
}

pub const LOG_FILE: &str = "events.jsonl";
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 1000;

/// Reads entries from a log file. A torn final line is ignored and its byte
/// offset reported so the caller can truncate.
pub fn read_log(path: &Path) -> Result<(Vec<LogEntry>, Option<u64>), StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), None)),
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut entries: Vec<LogEntry> = Vec::new();
    let mut offset = 0u64;
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            return Ok((entries, None));
        }
        let expected = entries.len() as u64 + 1;
        if !line.ends_with('\n') {
            return Ok((entries, Some(offset)));
        }
        let entry: LogEntry =
            serde_json::from_str(line.trim_end()).map_err(|e| StoreError::CorruptLog {
                sequence: expected,
                reason: e.to_string(),
            })?;
        if entry.sequence != expected {
            return Err(StoreError::CorruptLog {
                sequence: expected,
                reason: format!("found sequence {}", entry.sequence),
            });
        }
        entries.push(entry);
        offset += n as u64;
    }
}

/// Writable handle on a log file.
pub struct EventLog {
    path: PathBuf,
    file: File,
    last: u64,
}

impl EventLog {
    /// Opens (creating if needed) and recovers the log. Returns the handle
    /// and every intact entry.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<LogEntry>), StoreError> {
        let path = path.as_ref().to_path_buf();
        let (entries, torn) = read_log(&path)?;
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        if let Some(len) = torn {
            file.set_len(len)?;
            file.sync_all()?;
        }
        let last = entries.last().map_or(0, |e| e.sequence);
        Ok((Self { path, file, last }, entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn last_sequence(&self) -> u64 {
        self.last
    }

    /// Appends one entry; durable on return.
    pub fn append<T: Serialize>(
        &mut self,
        kind: LogKind,
        body: &T,
        appended_at: DateTime<Utc>,
    ) -> Result<LogEntry, StoreError> {
        let entry = LogEntry {
            sequence: self.last + 1,
            kind,
            body: serde_json::to_value(body)?,
            appended_at,
        };
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        // A single write keeps a failed append detectable as a torn line.
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        self.last = entry.sequence;
        Ok(entry)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot<S> {
    pub as_of_sequence: u64,
    pub state: S,
}

fn snapshot_name(seq: u64) -> String {
    format!("snapshot-{seq:012}.json")
}

/// Writes a snapshot atomically (temp file + rename).
pub fn write_snapshot<S: Serialize>(dir: &Path, snap: &Snapshot<S>) -> Result<PathBuf, StoreError> {
    let target = dir.join(snapshot_name(snap.as_of_sequence));
    let tmp = dir.join(format!("{}.tmp", snapshot_name(snap.as_of_sequence)));
    {
        let mut f = File::create(&tmp)?;
        serde_json::to_writer(&mut f, snap)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    Ok(target)
}

/// The newest readable snapshot no later than `max_sequence`.
pub fn latest_snapshot<S: DeserializeOwned>(
    dir: &Path,
    max_sequence: u64,
) -> Result<Option<Snapshot<S>>, StoreError> {
    let mut names: Vec<String> = match fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.starts_with("snapshot-") && n.ends_with(".json"))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    names.sort();
    for name in names.iter().rev() {
        let Ok(text) = fs::read_to_string(dir.join(name)) else {
            continue;
        };
        // An unreadable snapshot is skipped; the log is the source of truth.
        if let Ok(snap) = serde_json::from_str::<Snapshot<S>>(&text) {
            if snap.as_of_sequence <= max_sequence {
                return Ok(Some(snap));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use serde_json::json;

    fn t() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 3, 2, 0, 0, 0).unwrap()
    }

    #[test]
    fn sequences_start_at_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(LOG_FILE);
        let (mut log, entries) = EventLog::open(&path).unwrap();
        assert!(entries.is_empty());
        assert_eq!(
            log.append(LogKind::Config, &json!({"a": 1}), t())
                .unwrap()
                .sequence,
            1
        );
        assert_eq!(
            log.append(LogKind::Config, &json!({"a": 2}), t())
                .unwrap()
                .sequence,
            2
        );
        drop(log);
        let (log, entries) = EventLog::open(&path).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(log.last_sequence(), 2);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(LOG_FILE);
        let (mut log, _) = EventLog::open(&path).unwrap();
        log.append(LogKind::Config, &json!({}), t()).unwrap();
        drop(log);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"sequence":2,"kind":"CON"#).unwrap();
        drop(f);
        let (mut log, entries) = EventLog::open(&path).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(
            log.append(LogKind::Config, &json!({}), t())
                .unwrap()
                .sequence,
            2
        );
        drop(log);
        assert_eq!(EventLog::open(&path).unwrap().1.len(), 2);
    }

    #[test]
    fn gap_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(LOG_FILE);
        let mut text = String::new();
        for seq in [1u64, 2, 3, 4, 6] {
            let e = LogEntry {
                sequence: seq,
                kind: LogKind::Notification,
                body: json!({}),
                appended_at: t(),
            };
            text.push_str(&serde_json::to_string(&e).unwrap());
            text.push('\n');
        }
        fs::write(&path, text).unwrap();
        match EventLog::open(&path) {
            Err(StoreError::CorruptLog { sequence, .. }) => assert_eq!(sequence, 5),
            other => panic!(
                "expected corrupt log, got {:?}",
                other.map(|(_, e)| e.len())
            ),
        }
    }

    #[test]
    fn snapshot_roundtrip_picks_latest_eligible() {
        let dir = tempfile::tempdir().unwrap();
        for seq in [10u64, 20] {
            write_snapshot(
                dir.path(),
                &Snapshot {
                    as_of_sequence: seq,
                    state: json!({"n": seq}),
                },
            )
            .unwrap();
        }
        let s: Snapshot<serde_json::Value> = latest_snapshot(dir.path(), 25).unwrap().unwrap();
        assert_eq!(s.as_of_sequence, 20);
        let s: Snapshot<serde_json::Value> = latest_snapshot(dir.path(), 15).unwrap().unwrap();
        assert_eq!(s.as_of_sequence, 10);
        assert!(latest_snapshot::<serde_json::Value>(dir.path(), 5)
            .unwrap()
            .is_none());
    }
}
