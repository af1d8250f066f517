//! Notification records and sinks.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::AlarmNotification;
use crate::model::{DepartmentId, NodeId, PositionId};
use crate::period::Period;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("notifier unavailable: {0}")]
pub struct NotifierUnavailable(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReminderNotification {
    pub position_id: PositionId,
    pub node_id: NodeId,
    pub period_end: DateTime<Utc>,
    /// 1 = most urgent.
    pub urgency: usize,
    pub generated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowScoreNotification {
    pub period: Period,
    pub position_id: PositionId,
    pub total: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepartmentNotification {
    pub period: Period,
    pub department_id: DepartmentId,
    pub positions: Vec<PositionId>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Notification {
    Reminder(ReminderNotification),
    LowScore(LowScoreNotification),
    Department(DepartmentNotification),
    Alarm(AlarmNotification),
}

impl Notification {
    /// Deduplication key; a key is dispatched at most once.
    pub fn key(&self) -> String {
        match self {
            Notification::Reminder(r) => {
                format!("reminder/{}/{}", r.node_id, r.period_end.to_rfc3339())
            }
            Notification::LowScore(l) => format!("low-score/{}/{}", l.period, l.position_id),
            Notification::Department(d) => format!("department/{}/{}", d.period, d.department_id),
            Notification::Alarm(a) => format!("alarm/{}", a.notification_id),
        }
    }
}

pub trait Notifier {
    fn notify(&mut self, notification: &Notification) -> Result<(), NotifierUnavailable>;
}

/// Keeps every dispatched notification in memory.
#[derive(Debug, Default)]
pub struct MemoryNotifier {
    pub sent: Vec<Notification>,
    /// When set, every dispatch fails.
    pub offline: bool,
}

impl Notifier for MemoryNotifier {
    fn notify(&mut self, n: &Notification) -> Result<(), NotifierUnavailable> {
        if self.offline {
            return Err(NotifierUnavailable("memory notifier offline".into()));
        }
        self.sent.push(n.clone());
        Ok(())
    }
}

/// Appends one JSON line per notification to a file.
pub struct JsonlNotifier {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlNotifier {
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            out: BufWriter::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Notifier for JsonlNotifier {
    fn notify(&mut self, n: &Notification) -> Result<(), NotifierUnavailable> {
        let line = serde_json::to_string(n).map_err(|e| NotifierUnavailable(e.to_string()))?;
        writeln!(self.out, "{line}")
            .and_then(|_| self.out.flush())
            .map_err(|e| NotifierUnavailable(format!("{}: {e}", self.path.display())))
    }
}
