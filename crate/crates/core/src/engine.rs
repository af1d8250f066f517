//! Event-sourced engine state.
//!
//! [`State`] changes only through [`State::apply`] on log entries, so a
//! replay of the log rebuilds it exactly. [`Engine`] validates commands,
//! appends them to the log and applies them; [`Engine::tick`] closes
//! finished periods and dispatches notifications.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accountability::{
    accountability_rank, build_rankings, low_score_notifications, score_series,
    AccountabilityReport, Incident, RankOptions, RankingSnapshot, ScoreSource, SeriesPoint,
    DEFAULT_LOW_SCORE_THRESHOLD,
};
use crate::graph::{DagExport, GraphError, RelationGraph, DEFAULT_DECAY};
use crate::ingest::{
    handling_completion, map_event, spawn_tasks, AlarmCase, AlarmState, HandlingReport,
    IngestError, SensorEvent,
};
use crate::model::{
    validate_enterprise, CollectionMethod, Enterprise, EvaluationMethod, NodeId, PositionId,
    ReportingPeriod, ResponsibilityCategory, ResponsibilityList, RiskLevel, ValidationReport,
};
use crate::notify::{Notification, Notifier};
use crate::period::Period;
use crate::quantify::{
    effective_configuration, QuantificationReport, QuantifyError, RiskTuningPolicy,
};
use crate::reminder::{partition, LeadTimes, ReminderDispatcher, ReminderPartition, TaskInstance};
use crate::scoring::{
    check_mandatory, AssessmentRecord, AttendanceRecord, FulfillmentRecord, ScoreContext,
    ScoreGate, ScoreReport, ScoringPolicy, StoredFulfillment, SupervisionRecord, TriggeredTask,
};
use crate::store::{
    latest_snapshot, write_snapshot, EventLog, LogEntry, LogKind, Snapshot, StoreError,
    DEFAULT_SNAPSHOT_EVERY, LOG_FILE,
};

/// Tunable policies carried with each configuration version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub tuning: RiskTuningPolicy,
    pub scoring: ScoringPolicy,
    pub lead_times: LeadTimes,
    pub low_score_threshold: f64,
    pub decay: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tuning: RiskTuningPolicy::default(),
            scoring: ScoringPolicy::default(),
            lead_times: LeadTimes::default(),
            low_score_threshold: DEFAULT_LOW_SCORE_THRESHOLD,
            decay: DEFAULT_DECAY,
        }
    }
}

impl Settings {
    pub fn rank_options(&self) -> RankOptions {
        RankOptions {
            low_score_threshold: self.low_score_threshold,
            decay: self.decay,
        }
    }
}

/// Body of a CONFIG entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigVersion {
    pub version: u64,
    pub enterprise: Enterprise,
    #[serde(default)]
    pub settings: Settings,
}

/// Request to install a new configuration version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSubmission {
    /// Version the document was edited from; absent for the first version.
    #[serde(default)]
    pub base_version: Option<u64>,
    pub enterprise: Enterprise,
    #[serde(default)]
    pub settings: Option<Settings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FulfillmentSubmission {
    pub record_id: String,
    pub node_id: NodeId,
    pub period_start: DateTime<Utc>,
    pub period_end: DateTime<Utc>,
    #[serde(default = "manual")]
    pub source: CollectionMethod,
    #[serde(default)]
    pub evidence: Vec<String>,
    pub completion: f64,
    #[serde(default)]
    pub extension_note: Option<String>,
    #[serde(default)]
    pub self_eval: Option<f64>,
}

fn manual() -> CollectionMethod {
    CollectionMethod::Manual
}

impl FulfillmentSubmission {
    pub fn into_record(self, submitted_at: DateTime<Utc>) -> FulfillmentRecord {
        FulfillmentRecord {
            record_id: self.record_id,
            node_id: self.node_id,
            period_start: self.period_start,
            period_end: self.period_end,
            source: self.source,
            evidence: self.evidence,
            submitted_at,
            completion: self.completion,
            extension_note: self.extension_note,
            self_eval: self.self_eval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionSubmission {
    pub record_id: String,
    pub supervision_node_id: NodeId,
    pub supervised_node_id: NodeId,
    pub period_start: DateTime<Utc>,
    pub period_end: DateTime<Utc>,
    pub supervisory_score: f64,
    pub supervisory_max: f64,
}

impl SupervisionSubmission {
    pub fn into_record(self, submitted_at: DateTime<Utc>) -> SupervisionRecord {
        SupervisionRecord {
            record_id: self.record_id,
            supervision_node_id: self.supervision_node_id,
            supervised_node_id: self.supervised_node_id,
            period_start: self.period_start,
            period_end: self.period_end,
            supervisory_score: self.supervisory_score,
            supervisory_max: self.supervisory_max,
            submitted_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttendanceSubmission {
    pub record_id: String,
    pub position_id: PositionId,
    pub slot_start: DateTime<Utc>,
    pub attended: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentSubmission {
    pub record_id: String,
    pub position_id: PositionId,
    #[serde(default)]
    pub node_id: Option<NodeId>,
    pub method: EvaluationMethod,
    pub assessor: String,
    pub score: f64,
    pub assessed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlarmAction {
    Acknowledge,
    Handle(HandlingReport),
}

/// Body of an ALARM_TRANSITION entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmTransition {
    pub case_id: String,
    #[serde(flatten)]
    pub action: AlarmAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodCloseBody {
    pub period: Period,
}

/// Body of a NOTIFICATION entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NotificationRecord {
    pub notification_id: String,
    pub key: String,
    pub notification: Notification,
    pub dispatched_at: DateTime<Utc>,
    #[serde(default)]
    pub sequence: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub sequence: u64,
    pub event: SensorEvent,
    pub mapped_nodes: Vec<NodeId>,
    pub unmapped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedPeriod {
    pub period: Period,
    pub closed_at: DateTime<Utc>,
    pub sequence: u64,
    pub reports: BTreeMap<PositionId, ScoreReport>,
    pub rankings: RankingSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentRecord {
    pub sequence: u64,
    pub incident: Incident,
}

/// Acknowledgement of an ingested record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub sequence: u64,
    /// True when the record had been ingested before; nothing was appended.
    pub duplicate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unmapped: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
}

impl Receipt {
    fn new(sequence: u64, duplicate: bool) -> Self {
        Self {
            sequence,
            duplicate,
            unmapped: None,
            case_id: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("no configuration installed")]
    NotConfigured,
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("invalid configuration")]
    InvalidConfiguration(ValidationReport),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("stale configuration version {given:?}; current is {current}")]
    StaleVersion { given: Option<u64>, current: u64 },
    #[error(transparent)]
    Quantify(#[from] QuantifyError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl From<IngestError> for EngineError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::InvalidTransition { .. } => EngineError::Conflict(e.to_string()),
            _ => EngineError::Invalid(e.to_string()),
        }
    }
}

/// Values derived from the configuration; rebuilt rather than stored.
#[derive(Debug, Clone)]
pub struct Derived {
    pub effective: Enterprise,
    pub graph: RelationGraph,
    pub dag: DagExport,
    pub quantification: QuantificationReport,
}

fn derive(config: &ConfigVersion) -> Result<Derived, EngineError> {
    let report = validate_enterprise(&config.enterprise);
    if !report.is_valid() {
        return Err(EngineError::InvalidConfiguration(report));
    }
    let plan = effective_configuration(&config.enterprise, &config.settings.tuning)?;
    Ok(Derived {
        effective: plan.enterprise,
        graph: plan.graph,
        dag: plan.dag,
        quantification: plan.report,
    })
}

fn corrupt(entry: &LogEntry, reason: impl ToString) -> StoreError {
    StoreError::CorruptLog {
        sequence: entry.sequence,
        reason: reason.to_string(),
    }
}

fn record_key(kind: &str, id: &str) -> String {
    format!("{kind}/{id}")
}

/// Materialized engine state.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct State {
    pub last_sequence: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_appended: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigVersion>,
    pub events: BTreeMap<String, EventRecord>,
    pub triggered: Vec<TriggeredTask>,
    pub fulfillments: Vec<StoredFulfillment>,
    pub supervisions: Vec<SupervisionRecord>,
    pub attendance: Vec<AttendanceRecord>,
    pub assessments: Vec<AssessmentRecord>,
    /// `kind/record_id` → sequence of the entry that stored it.
    pub records: BTreeMap<String, u64>,
    pub alarms: BTreeMap<String, AlarmCase>,
    pub closed: BTreeMap<Period, ClosedPeriod>,
    pub notifications: Vec<NotificationRecord>,
    pub sent: BTreeSet<String>,
    pub incidents: BTreeMap<String, IncidentRecord>,
    #[serde(skip)]
    derived: Option<Derived>,
}

impl State {
    /// Replays `entries` from an empty state.
    pub fn replay<'a>(
        entries: impl IntoIterator<Item = &'a LogEntry>,
    ) -> Result<State, StoreError> {
        let mut s = State::default();
        for e in entries {
            s.apply(e)?;
        }
        Ok(s)
    }

    /// Canonical serialization, used for equality checks.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("state serializes")
    }

    pub fn derived(&self) -> Option<&Derived> {
        self.derived.as_ref()
    }

    pub fn effective(&self) -> Option<&Enterprise> {
        self.derived.as_ref().map(|d| &d.effective)
    }

    pub fn settings(&self) -> Settings {
        self.config
            .as_ref()
            .map(|c| c.settings.clone())
            .unwrap_or_default()
    }

    pub fn version(&self) -> u64 {
        self.config.as_ref().map_or(0, |c| c.version)
    }

    pub fn utc_offset(&self) -> i32 {
        self.effective().map_or(0, |e| e.utc_offset_minutes)
    }

    /// Recomputes derived values after loading from a snapshot.
    pub fn rebuild(&mut self) -> Result<(), EngineError> {
        self.derived = match &self.config {
            Some(c) => Some(derive(c)?),
            None => None,
        };
        Ok(())
    }

    pub fn open_risks(&self) -> BTreeSet<crate::model::Category> {
        self.alarms
            .values()
            .filter(|c| c.is_open())
            .map(|c| c.category.clone())
            .collect()
    }

    fn gate_for(&self, record: &FulfillmentRecord) -> StoredFulfillment {
        let open = self.open_risks();
        let (gate, held_on) = match self
            .effective()
            .and_then(|e| e.node(&record.node_id).map(|n| (e, n)))
        {
            Some((ent, node)) => {
                let cat = ent.node_risk_category(node);
                let gate = check_mandatory(node, cat, record, &open);
                (
                    gate,
                    (gate == ScoreGate::RiskHold)
                        .then(|| cat.cloned())
                        .flatten(),
                )
            }
            None => (ScoreGate::Direct, None),
        };
        StoredFulfillment {
            record: record.clone(),
            gate,
            released_at: None,
            held_on,
        }
    }

    pub fn apply(&mut self, entry: &LogEntry) -> Result<(), StoreError> {
        if entry.sequence != self.last_sequence + 1 {
            return Err(corrupt(
                entry,
                format!("expected sequence {}", self.last_sequence + 1),
            ));
        }
        let at = entry.appended_at;
        macro_rules! body {
            ($t:ty) => {
                serde_json::from_value::<$t>(entry.body.clone()).map_err(|e| corrupt(entry, e))?
            };
        }
        match entry.kind {
            LogKind::Config => {
                let config = body!(ConfigVersion);
                let derived = derive(&config).map_err(|e| corrupt(entry, e))?;
                self.records.insert(
                    record_key("config", &config.version.to_string()),
                    entry.sequence,
                );
                self.config = Some(config);
                self.derived = Some(derived);
            }
            LogKind::SensorEvent => {
                let event = body!(SensorEvent);
                let (mapped, tasks, case) = match self.effective() {
                    Some(ent) => {
                        let mapped = map_event(&event, ent);
                        let tasks = spawn_tasks(&event, &mapped, ent);
                        let case = event
                            .raises_alarm()
                            .then(|| AlarmCase::raise(&event, ent, at, entry.sequence));
                        (mapped, tasks, case)
                    }
                    None => (Vec::new(), Vec::new(), None),
                };
                self.triggered.extend(tasks);
                let case_id = case.as_ref().map(|c| c.case_id.clone());
                if let Some(c) = case {
                    self.alarms.insert(c.case_id.clone(), c);
                }
                self.events.insert(
                    event.event_id.clone(),
                    EventRecord {
                        sequence: entry.sequence,
                        unmapped: mapped.is_empty(),
                        mapped_nodes: mapped,
                        event,
                        case_id,
                    },
                );
            }
            LogKind::Fulfillment => {
                let record = body!(FulfillmentRecord);
                self.records
                    .insert(record_key("fulfillment", &record.record_id), entry.sequence);
                let stored = self.gate_for(&record);
                self.fulfillments.push(stored);
            }
            LogKind::Supervision => {
                let record = body!(SupervisionRecord);
                self.records
                    .insert(record_key("supervision", &record.record_id), entry.sequence);
                self.supervisions.push(record);
            }
            LogKind::Attendance => {
                let record = body!(AttendanceRecord);
                self.records
                    .insert(record_key("attendance", &record.record_id), entry.sequence);
                self.attendance.push(record);
            }
            LogKind::Assessment => {
                let record = body!(AssessmentRecord);
                self.records
                    .insert(record_key("assessment", &record.record_id), entry.sequence);
                self.assessments.push(record);
            }
            LogKind::AlarmTransition => {
                let t = body!(AlarmTransition);
                self.apply_alarm(&t, at, entry.sequence)
                    .map_err(|e| corrupt(entry, e))?;
            }
            LogKind::PeriodClose => {
                let PeriodCloseBody { period } = body!(PeriodCloseBody);
                let closed = self
                    .compute_close(period, at, entry.sequence)
                    .map_err(|e| corrupt(entry, e))?;
                self.closed.insert(period, closed);
            }
            LogKind::Notification => {
                let mut n = body!(NotificationRecord);
                n.sequence = entry.sequence;
                self.sent.insert(n.key.clone());
                self.notifications.push(n);
            }
            LogKind::Incident => {
                let incident = body!(Incident);
                self.incidents.insert(
                    incident.incident_id.clone(),
                    IncidentRecord {
                        sequence: entry.sequence,
                        incident,
                    },
                );
            }
        }
        self.last_sequence = entry.sequence;
        self.clock = Some(self.clock.map_or(at, |c| c.max(at)));
        self.first_appended = Some(self.first_appended.map_or(at, |c| c.min(at)));
        Ok(())
    }

    fn apply_alarm(
        &mut self,
        t: &AlarmTransition,
        at: DateTime<Utc>,
        seq: u64,
    ) -> Result<(), EngineError> {
        let case = self
            .alarms
            .get_mut(&t.case_id)
            .ok_or_else(|| EngineError::NotFound(format!("alarm case {}", t.case_id)))?;
        match &t.action {
            AlarmAction::Acknowledge => case.acknowledge(at, seq)?,
            AlarmAction::Handle(report) => {
                case.record_handling(report, at, seq)?;
                let case = case.clone();
                self.after_close(&case, report, at);
            }
        }
        Ok(())
    }

    /// Auto-fulfillment for the handling node and release of held records.
    fn after_close(&mut self, case: &AlarmCase, report: &HandlingReport, at: DateTime<Utc>) {
        let node = case
            .handling_node
            .as_ref()
            .and_then(|id| self.effective().and_then(|e| e.node(id)))
            .cloned();
        if let Some(node) = node {
            let record = FulfillmentRecord {
                record_id: format!("alarm:{}", case.case_id),
                node_id: node.node_id.clone(),
                period_start: report.processing_start,
                period_end: report.processing_end,
                source: node.collection,
                evidence: Vec::new(),
                submitted_at: at,
                completion: handling_completion(
                    report.processing_start,
                    report.processing_end,
                    node.response_budget_secs(),
                ),
                extension_note: None,
                self_eval: None,
            };
            self.records.insert(
                record_key("fulfillment", &record.record_id),
                case.updated_seq,
            );
            let stored = self.gate_for(&record);
            self.fulfillments.push(stored);
        }
        let open = self.open_risks();
        for f in &mut self.fulfillments {
            let clears = f.gate == ScoreGate::RiskHold
                && f.released_at.is_none()
                && f.held_on.as_ref().is_none_or(|c| !open.contains(c));
            if clears {
                f.released_at = Some(at);
            }
        }
    }

    fn context(&self) -> Option<ScoreContext<'_>> {
        Some(ScoreContext {
            enterprise: self.effective()?,
            fulfillments: &self.fulfillments,
            supervisions: &self.supervisions,
            attendance: &self.attendance,
            assessments: &self.assessments,
            triggered: &self.triggered,
        })
    }

    fn scored_positions(&self, period: Period) -> Vec<PositionId> {
        let Some(ent) = self.effective() else {
            return Vec::new();
        };
        ent.lists()
            .filter(|l| l.reporting_period == period.kind())
            .map(|l| l.position_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    fn compute_close(
        &self,
        period: Period,
        at: DateTime<Utc>,
        seq: u64,
    ) -> Result<ClosedPeriod, EngineError> {
        let ctx = self.context().ok_or(EngineError::NotConfigured)?;
        let policy = self.settings().scoring;
        let cutoff = period.bounds(self.utc_offset()).1;
        let reports: BTreeMap<PositionId, ScoreReport> = self
            .scored_positions(period)
            .into_iter()
            .filter_map(|p| ctx.score(&p, period, cutoff, &policy).map(|r| (p, r)))
            .collect();
        let rankings = build_rankings(period, reports.values());
        Ok(ClosedPeriod {
            period,
            closed_at: at,
            sequence: seq,
            reports,
            rankings,
        })
    }

    /// Closed report if the period is closed, else the in-progress score at
    /// the state clock.
    pub fn score(
        &self,
        position: &PositionId,
        period: Option<Period>,
    ) -> Result<ScoreReport, EngineError> {
        let ent = self.effective().ok_or(EngineError::NotConfigured)?;
        if ent.position(position).is_none() {
            return Err(EngineError::NotFound(format!("position {position}")));
        }
        let period = match period {
            Some(p) => p,
            None => {
                let kind = self.position_kind(position).ok_or_else(|| {
                    EngineError::NotFound(format!("lists of position {position}"))
                })?;
                let now = self
                    .clock
                    .ok_or_else(|| EngineError::NotFound("no activity yet".into()))?;
                Period::containing(kind, now, self.utc_offset())
            }
        };
        if let Some(r) = self
            .closed
            .get(&period)
            .and_then(|c| c.reports.get(position))
        {
            return Ok(r.clone());
        }
        let end = period.bounds(self.utc_offset()).1;
        let cutoff = self.clock.map_or(end, |c| c.min(end));
        self.context()
            .and_then(|ctx| ctx.score(position, period, cutoff, &self.settings().scoring))
            .ok_or_else(|| {
                EngineError::NotFound(format!(
                    "no {:?} list for position {position}",
                    period.kind()
                ))
            })
    }

    fn position_kind(&self, position: &PositionId) -> Option<ReportingPeriod> {
        let kinds: BTreeSet<ReportingPeriod> = self
            .effective()?
            .lists()
            .filter(|l| &l.position_id == position)
            .map(|l| l.reporting_period)
            .collect();
        kinds
            .iter()
            .copied()
            .find(|k| *k == ReportingPeriod::Weekly)
            .or(kinds.into_iter().next())
    }

    pub fn series(&self, position: &PositionId) -> Result<Vec<SeriesPoint>, EngineError> {
        let ent = self.effective().ok_or(EngineError::NotConfigured)?;
        if ent.position(position).is_none() {
            return Err(EngineError::NotFound(format!("position {position}")));
        }
        let reports: Vec<(&Period, &BTreeMap<PositionId, ScoreReport>)> =
            self.closed.iter().map(|(p, c)| (p, &c.reports)).collect();
        Ok(score_series(position, reports, self.utc_offset()))
    }

    pub fn rankings(&self, period: Period) -> Result<&RankingSnapshot, EngineError> {
        self.closed
            .get(&period)
            .map(|c| &c.rankings)
            .ok_or_else(|| EngineError::NotFound(format!("period {period} is not closed")))
    }

    pub fn position_lists(
        &self,
        position: &PositionId,
    ) -> Result<Vec<&ResponsibilityList>, EngineError> {
        let ent = self.effective().ok_or(EngineError::NotConfigured)?;
        if ent.position(position).is_none() {
            return Err(EngineError::NotFound(format!("position {position}")));
        }
        Ok(ent.lists().filter(|l| &l.position_id == position).collect())
    }

    pub fn incident_report(&self, incident_id: &str) -> Result<AccountabilityReport, EngineError> {
        let rec = self
            .incidents
            .get(incident_id)
            .ok_or_else(|| EngineError::NotFound(format!("incident {incident_id}")))?;
        self.accountability(&rec.incident)
    }

    /// Ranks positions for an incident using closed scores of the period
    /// containing it, or in-progress scores when that period is open.
    pub fn accountability(&self, incident: &Incident) -> Result<AccountabilityReport, EngineError> {
        let d = self.derived().ok_or(EngineError::NotConfigured)?;
        let kinds: BTreeSet<ReportingPeriod> =
            d.effective.lists().map(|l| l.reporting_period).collect();
        let kind = if kinds.contains(&ReportingPeriod::Weekly) || kinds.is_empty() {
            ReportingPeriod::Weekly
        } else {
            ReportingPeriod::Monthly
        };
        let period = Period::containing(kind, incident.occurred_at, self.utc_offset());
        let (scores, source) = match self.closed.get(&period) {
            Some(c) => (
                c.reports
                    .iter()
                    .map(|(p, r)| (p.clone(), r.breakdown.total))
                    .collect(),
                ScoreSource::Closed,
            ),
            None => {
                let mut scores = BTreeMap::new();
                for p in self.scored_positions(period) {
                    if let Ok(r) = self.score(&p, Some(period)) {
                        scores.insert(p, r.breakdown.total);
                    }
                }
                (scores, ScoreSource::Realtime)
            }
        };
        Ok(accountability_rank(
            incident,
            &d.effective,
            &d.graph,
            period,
            &scores,
            source,
            &self.settings().rank_options(),
        )?)
    }

    /// Task instances visible at `now`, one per list item or open
    /// triggered task.
    pub fn task_instances(&self, now: DateTime<Utc>) -> Vec<TaskInstance> {
        let Some(ent) = self.effective() else {
            return Vec::new();
        };
        let offset = ent.utc_offset_minutes;
        let counted = |node: &NodeId, w: (DateTime<Utc>, DateTime<Utc>)| {
            let mut executed = false;
            let mut best: Option<f64> = None;
            for f in self
                .fulfillments
                .iter()
                .filter(|f| &f.record.node_id == node)
            {
                let r = &f.record;
                if r.submitted_at > now || r.period_start < w.0 || r.period_start >= w.1 {
                    continue;
                }
                executed = true;
                if f.counts_at(now) {
                    best = Some(best.map_or(r.completion, |b: f64| b.max(r.completion)));
                }
            }
            for s in self
                .supervisions
                .iter()
                .filter(|s| &s.supervision_node_id == node)
            {
                if s.submitted_at <= now && s.period_start >= w.0 && s.period_start < w.1 {
                    executed = true;
                    best = Some(100.0);
                }
            }
            (executed, best)
        };
        let supervised_in = |node: &NodeId, w: (DateTime<Utc>, DateTime<Utc>)| {
            self.supervisions.iter().any(|s| {
                &s.supervised_node_id == node
                    && s.submitted_at <= now
                    && s.period_start >= w.0
                    && s.period_start < w.1
            })
        };

        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for list in ent.lists() {
            for id in &list.items {
                if !seen.insert(id.clone()) {
                    continue;
                }
                let Some(node) = ent.node(id) else { continue };
                let base = |start, end, periodic| TaskInstance {
                    node_id: node.node_id.clone(),
                    position_id: node.position_id.clone(),
                    periodic,
                    risk_level: ent.node_risk_level(node).unwrap_or(RiskLevel::Low),
                    weight: node.weight,
                    period_start: start,
                    period_end: end,
                    executed: false,
                    scored: false,
                    supervision_ok: true,
                    data_valid: false,
                    current_score: None,
                };
                if let Some(w) = node.cycle.window_at(now) {
                    let (executed, best) = counted(id, w);
                    let mut t = base(w.0, w.1, true);
                    t.executed = executed;
                    t.scored = best.is_some();
                    t.current_score = best;
                    t.supervision_ok = node.supervised_by.is_none() || supervised_in(id, w);
                    out.push(t);
                } else if node.trigger.kind == crate::model::TriggerKind::EventTriggered {
                    let period =
                        Period::containing(list.reporting_period, now, offset).bounds(offset);
                    for task in self.triggered.iter().filter(|t| &t.node_id == id) {
                        if task.triggered_at > now || task.triggered_at < period.0 {
                            continue;
                        }
                        let (_, best) = counted(id, (task.triggered_at, DateTime::<Utc>::MAX_UTC));
                        let mut t = base(task.triggered_at, task.deadline, false);
                        t.data_valid = best.is_some();
                        t.current_score = best;
                        out.push(t);
                    }
                } else {
                    let w = Period::containing(list.reporting_period, now, offset).bounds(offset);
                    let (_, best) = counted(id, w);
                    let mut t = base(w.0, w.1, false);
                    t.data_valid = best.is_some();
                    t.current_score = best;
                    out.push(t);
                }
            }
        }
        out
    }

    pub fn reminders(&self) -> ReminderPartition {
        match self.clock {
            Some(now) => partition(self.task_instances(now)),
            None => ReminderPartition::default(),
        }
    }

    /// Periods that have ended by `now` and are not yet closed, oldest first.
    pub fn periods_due(&self, now: DateTime<Utc>) -> Vec<Period> {
        let (Some(ent), Some(first)) = (self.effective(), self.first_appended) else {
            return Vec::new();
        };
        let offset = ent.utc_offset_minutes;
        let kinds: BTreeSet<ReportingPeriod> = ent.lists().map(|l| l.reporting_period).collect();
        let mut due = Vec::new();
        for kind in kinds {
            let mut p = Period::containing(kind, first, offset);
            while p.bounds(offset).1 <= now {
                if !self.closed.contains_key(&p) {
                    due.push(p);
                }
                p = p.next();
            }
        }
        due.sort_by_key(|p| (p.bounds(offset).1, p.to_string()));
        due
    }

    /// Alarm cases and notifications changed after `since`.
    pub fn alarm_feed(&self, since: u64) -> AlarmFeed {
        AlarmFeed {
            latest_sequence: self.last_sequence,
            cases: self
                .alarms
                .values()
                .filter(|c| c.updated_seq > since)
                .cloned()
                .collect(),
            notifications: self
                .notifications
                .iter()
                .filter(|n| n.sequence > since)
                .cloned()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmFeed {
    pub latest_sequence: u64,
    pub cases: Vec<AlarmCase>,
    pub notifications: Vec<NotificationRecord>,
}

/// What a tick did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TickOutcome {
    pub closed: Vec<Period>,
    pub dispatched: usize,
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOptions {
    pub snapshot_every: u64,
    /// Use snapshots when reopening.
    pub load_snapshots: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            load_snapshots: true,
        }
    }
}

/// Single writer over one enterprise log.
pub struct Engine {
    dir: PathBuf,
    log: EventLog,
    state: State,
    notifier: Box<dyn Notifier + Send>,
    options: EngineOptions,
}

impl Engine {
    pub fn open(
        dir: impl AsRef<Path>,
        notifier: Box<dyn Notifier + Send>,
    ) -> Result<Self, EngineError> {
        Self::open_with(dir, notifier, EngineOptions::default())
    }

    /// Opens the log in `dir`, restoring state from the newest snapshot and
    /// replaying the suffix.
    pub fn open_with(
        dir: impl AsRef<Path>,
        notifier: Box<dyn Notifier + Send>,
        options: EngineOptions,
    ) -> Result<Self, EngineError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(StoreError::from)?;
        let (log, entries) = EventLog::open(dir.join(LOG_FILE))?;
        let snapshot = if options.load_snapshots {
            latest_snapshot::<State>(&dir, log.last_sequence())?
        } else {
            None
        };
        let mut state = match snapshot {
            Some(s) => {
                let mut state = s.state;
                state.rebuild()?;
                state
            }
            None => State::default(),
        };
        let start = state.last_sequence as usize;
        for e in &entries[start..] {
            state.apply(e)?;
        }
        Ok(Self {
            dir,
            log,
            state,
            notifier,
            options,
        })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn set_notifier(&mut self, notifier: Box<dyn Notifier + Send>) {
        self.notifier = notifier;
    }

    fn append<T: Serialize>(
        &mut self,
        kind: LogKind,
        body: &T,
        at: DateTime<Utc>,
    ) -> Result<LogEntry, EngineError> {
        let entry = self.log.append(kind, body, at)?;
        self.state.apply(&entry)?;
        if self.options.snapshot_every > 0 && entry.sequence % self.options.snapshot_every == 0 {
            write_snapshot(
                &self.dir,
                &Snapshot {
                    as_of_sequence: entry.sequence,
                    state: &self.state,
                },
            )?;
        }
        Ok(entry)
    }

    fn effective(&self) -> Result<&Enterprise, EngineError> {
        self.state.effective().ok_or(EngineError::NotConfigured)
    }

    /// Installs a configuration version.
    pub fn submit_config(
        &mut self,
        sub: ConfigSubmission,
        now: DateTime<Utc>,
    ) -> Result<Receipt, EngineError> {
        let settings = sub.settings.unwrap_or_default();
        if let Some(current) = &self.state.config {
            if current.enterprise == sub.enterprise && current.settings == settings {
                let seq = self
                    .state
                    .records
                    .get(&record_key("config", &current.version.to_string()))
                    .copied()
                    .unwrap_or(0);
                return Ok(Receipt::new(seq, true));
            }
        }
        let current = self.state.version();
        let base_ok = match sub.base_version {
            Some(v) => v == current,
            None => self.state.config.is_none(),
        };
        if !base_ok {
            return Err(EngineError::StaleVersion {
                given: sub.base_version,
                current,
            });
        }
        settings.tuning.check()?;
        settings
            .scoring
            .check()
            .map_err(|e| EngineError::Invalid(e.to_string()))?;
        let config = ConfigVersion {
            version: current + 1,
            enterprise: sub.enterprise,
            settings,
        };
        derive(&config)?;
        let entry = self.append(LogKind::Config, &config, now)?;
        Ok(Receipt::new(entry.sequence, false))
    }

    pub fn ingest_event(
        &mut self,
        event: SensorEvent,
        now: DateTime<Utc>,
    ) -> Result<Receipt, EngineError> {
        if let Some(r) = self.state.events.get(&event.event_id) {
            let mut receipt = Receipt::new(r.sequence, true);
            receipt.unmapped = Some(r.unmapped);
            receipt.case_id = r.case_id.clone();
            return Ok(receipt);
        }
        event.check(now)?;
        let entry = self.append(LogKind::SensorEvent, &event, now)?;
        let rec = &self.state.events[&event.event_id];
        let mut receipt = Receipt::new(entry.sequence, false);
        receipt.unmapped = Some(rec.unmapped);
        receipt.case_id = rec.case_id.clone();
        if let Some(case) = rec
            .case_id
            .as_ref()
            .and_then(|id| self.state.alarms.get(id))
        {
            for n in &case.notifications {
                // Delivery is best effort; the case records the dispatch.
                let _ = self.notifier.notify(&Notification::Alarm(n.clone()));
            }
        }
        Ok(receipt)
    }

    fn existing(&self, kind: &str, id: &str) -> Option<u64> {
        self.state.records.get(&record_key(kind, id)).copied()
    }

    fn check_id(id: &str) -> Result<(), EngineError> {
        if id.trim().is_empty() {
            return Err(EngineError::Invalid("empty record_id".into()));
        }
        Ok(())
    }

    pub fn submit_fulfillment(
        &mut self,
        sub: FulfillmentSubmission,
        now: DateTime<Utc>,
    ) -> Result<Receipt, EngineError> {
        Self::check_id(&sub.record_id)?;
        if let Some(seq) = self.existing("fulfillment", &sub.record_id) {
            let stored = self
                .state
                .fulfillments
                .iter()
                .find(|f| f.record.record_id == sub.record_id)
                .map(|f| &f.record);
            return match stored {
                Some(r) if *r == sub.clone().into_record(r.submitted_at) => {
                    Ok(Receipt::new(seq, true))
                }
                _ => Err(EngineError::Conflict(format!(
                    "fulfillment {} already recorded with different content",
                    sub.record_id
                ))),
            };
        }
        if self.effective()?.node(&sub.node_id).is_none() {
            return Err(EngineError::NotFound(format!("node {}", sub.node_id)));
        }
        if !(0.0..=100.0).contains(&sub.completion) {
            return Err(EngineError::Invalid(
                "completion must lie in [0, 100]".into(),
            ));
        }
        match (sub.self_eval, &sub.extension_note) {
            (Some(_), None) => {
                return Err(EngineError::Invalid(
                    "self_eval requires an extension_note".into(),
                ))
            }
            (Some(s), _) if !(0.0..=100.0).contains(&s) => {
                return Err(EngineError::Invalid(
                    "self_eval must lie in [0, 100]".into(),
                ))
            }
            _ => {}
        }
        if sub.period_start > sub.period_end {
            return Err(EngineError::Invalid(
                "period_start is after period_end".into(),
            ));
        }
        let entry = self.append(LogKind::Fulfillment, &sub.into_record(now), now)?;
        Ok(Receipt::new(entry.sequence, false))
    }

    pub fn submit_supervision(
        &mut self,
        sub: SupervisionSubmission,
        now: DateTime<Utc>,
    ) -> Result<Receipt, EngineError> {
        Self::check_id(&sub.record_id)?;
        if let Some(seq) = self.existing("supervision", &sub.record_id) {
            let stored = self
                .state
                .supervisions
                .iter()
                .find(|s| s.record_id == sub.record_id);
            return match stored {
                Some(r) if *r == sub.clone().into_record(r.submitted_at) => {
                    Ok(Receipt::new(seq, true))
                }
                _ => Err(EngineError::Conflict(format!(
                    "supervision {} already recorded with different content",
                    sub.record_id
                ))),
            };
        }
        let ent = self.effective()?;
        let sup = ent
            .node(&sub.supervision_node_id)
            .ok_or_else(|| EngineError::NotFound(format!("node {}", sub.supervision_node_id)))?;
        let target = ent
            .node(&sub.supervised_node_id)
            .ok_or_else(|| EngineError::NotFound(format!("node {}", sub.supervised_node_id)))?;
        if sup.category != ResponsibilityCategory::Supervision {
            return Err(EngineError::Invalid(format!(
                "{} is not a supervision node",
                sup.node_id
            )));
        }
        if target.supervised_by.as_ref() != Some(&sup.node_id) {
            return Err(EngineError::Invalid(format!(
                "{} does not supervise {}",
                sup.node_id, target.node_id
            )));
        }
        if !(sub.supervisory_max > 0.0
            && (0.0..=sub.supervisory_max).contains(&sub.supervisory_score))
        {
            return Err(EngineError::Invalid(
                "supervisory score must lie in [0, max] with max > 0".into(),
            ));
        }
        if sub.period_start > sub.period_end {
            return Err(EngineError::Invalid(
                "period_start is after period_end".into(),
            ));
        }
        let entry = self.append(LogKind::Supervision, &sub.into_record(now), now)?;
        Ok(Receipt::new(entry.sequence, false))
    }

    pub fn submit_attendance(
        &mut self,
        sub: AttendanceSubmission,
        now: DateTime<Utc>,
    ) -> Result<Receipt, EngineError> {
        Self::check_id(&sub.record_id)?;
        if let Some(seq) = self.existing("attendance", &sub.record_id) {
            let stored = self
                .state
                .attendance
                .iter()
                .find(|a| a.record_id == sub.record_id);
            return match stored {
                Some(a)
                    if a.position_id == sub.position_id
                        && a.slot_start == sub.slot_start
                        && a.attended == sub.attended =>
                {
                    Ok(Receipt::new(seq, true))
                }
                _ => Err(EngineError::Conflict(format!(
                    "attendance {} already recorded with different content",
                    sub.record_id
                ))),
            };
        }
        if self.effective()?.position(&sub.position_id).is_none() {
            return Err(EngineError::NotFound(format!(
                "position {}",
                sub.position_id
            )));
        }
        let record = AttendanceRecord {
            record_id: sub.record_id,
            position_id: sub.position_id,
            slot_start: sub.slot_start,
            attended: sub.attended,
            submitted_at: now,
        };
        let entry = self.append(LogKind::Attendance, &record, now)?;
        Ok(Receipt::new(entry.sequence, false))
    }

    pub fn submit_assessment(
        &mut self,
        sub: AssessmentSubmission,
        now: DateTime<Utc>,
    ) -> Result<Receipt, EngineError> {
        Self::check_id(&sub.record_id)?;
        let record = AssessmentRecord {
            record_id: sub.record_id,
            position_id: sub.position_id,
            node_id: sub.node_id,
            method: sub.method,
            assessor: sub.assessor,
            score: sub.score,
            assessed_at: sub.assessed_at,
            submitted_at: now,
        };
        if let Some(seq) = self.existing("assessment", &record.record_id) {
            let stored = self
                .state
                .assessments
                .iter()
                .find(|a| a.record_id == record.record_id);
            return match stored {
                Some(a)
                    if *a
                        == AssessmentRecord {
                            submitted_at: a.submitted_at,
                            ..record.clone()
                        } =>
                {
                    Ok(Receipt::new(seq, true))
                }
                _ => Err(EngineError::Conflict(format!(
                    "assessment {} already recorded with different content",
                    record.record_id
                ))),
            };
        }
        let ent = self.effective()?;
        if ent.position(&record.position_id).is_none() {
            return Err(EngineError::NotFound(format!(
                "position {}",
                record.position_id
            )));
        }
        if let Some(n) = &record.node_id {
            if ent.node(n).is_none() {
                return Err(EngineError::NotFound(format!("node {n}")));
            }
        }
        if !(0.0..=100.0).contains(&record.score) {
            return Err(EngineError::Invalid("score must lie in [0, 100]".into()));
        }
        let entry = self.append(LogKind::Assessment, &record, now)?;
        Ok(Receipt::new(entry.sequence, false))
    }

    fn case(&self, case_id: &str) -> Result<&AlarmCase, EngineError> {
        self.state
            .alarms
            .get(case_id)
            .ok_or_else(|| EngineError::NotFound(format!("alarm case {case_id}")))
    }

    pub fn acknowledge_alarm(
        &mut self,
        case_id: &str,
        now: DateTime<Utc>,
    ) -> Result<AlarmCase, EngineError> {
        let case = self.case(case_id)?;
        if case.state == AlarmState::Handling {
            return Ok(case.clone());
        }
        case.clone().acknowledge(now, 0)?;
        let body = AlarmTransition {
            case_id: case_id.to_owned(),
            action: AlarmAction::Acknowledge,
        };
        self.append(LogKind::AlarmTransition, &body, now)?;
        Ok(self.state.alarms[case_id].clone())
    }

    pub fn record_handling(
        &mut self,
        case_id: &str,
        report: HandlingReport,
        now: DateTime<Utc>,
    ) -> Result<AlarmCase, EngineError> {
        let case = self.case(case_id)?;
        if case.same_handling(&report) {
            return Ok(case.clone());
        }
        case.clone().record_handling(&report, now, 0)?;
        let body = AlarmTransition {
            case_id: case_id.to_owned(),
            action: AlarmAction::Handle(report),
        };
        self.append(LogKind::AlarmTransition, &body, now)?;
        Ok(self.state.alarms[case_id].clone())
    }

    pub fn submit_incident(
        &mut self,
        incident: Incident,
        now: DateTime<Utc>,
    ) -> Result<Receipt, EngineError> {
        Self::check_id(&incident.incident_id)?;
        if let Some(rec) = self.state.incidents.get(&incident.incident_id) {
            let same = Incident {
                related_node_ids: rec.incident.related_node_ids.clone(),
                ..incident.clone()
            } == rec.incident;
            return if same {
                Ok(Receipt::new(rec.sequence, true))
            } else {
                Err(EngineError::Conflict(format!(
                    "incident {} already recorded with different content",
                    incident.incident_id
                )))
            };
        }
        let ent = self.effective()?;
        let mut incident = incident;
        incident.related_node_ids =
            crate::accountability::analyze_incident(&incident, ent).related_node_ids;
        let entry = self.append(LogKind::Incident, &incident, now)?;
        Ok(Receipt::new(entry.sequence, false))
    }

    /// Closes `period` with scores cut off at its end.
    pub fn close_period(
        &mut self,
        period: Period,
        now: DateTime<Utc>,
    ) -> Result<&ClosedPeriod, EngineError> {
        self.effective()?;
        if self.state.closed.contains_key(&period) {
            return Err(EngineError::Conflict(format!(
                "period {period} is already closed"
            )));
        }
        self.append(LogKind::PeriodClose, &PeriodCloseBody { period }, now)?;
        self.notify_low_scores(now)?;
        Ok(&self.state.closed[&period])
    }

    fn dispatch(
        &mut self,
        notification: Notification,
        now: DateTime<Utc>,
    ) -> Result<bool, EngineError> {
        if self.notifier.notify(&notification).is_err() {
            return Ok(false);
        }
        let record = NotificationRecord {
            notification_id: format!("n-{}", self.state.last_sequence + 1),
            key: notification.key(),
            notification,
            dispatched_at: now,
            sequence: 0,
        };
        self.append(LogKind::Notification, &record, now)?;
        Ok(true)
    }

    fn notify_low_scores(&mut self, now: DateTime<Utc>) -> Result<(usize, usize), EngineError> {
        let threshold = self.state.settings().low_score_threshold;
        let owed: Vec<Notification> = self
            .state
            .closed
            .values()
            .flat_map(|c| low_score_notifications(&c.rankings, threshold))
            .filter(|n| !self.state.sent.contains(&n.key()))
            .collect();
        let (mut sent, mut pending) = (0, 0);
        for n in owed {
            if pending == 0 && self.dispatch(n, now)? {
                sent += 1;
            } else {
                pending += 1;
            }
        }
        Ok((sent, pending))
    }

    /// Closes ended periods, then sends owed low-score notifications and
    /// due reminders. Safe to repeat with the same `now`.
    pub fn tick(&mut self, now: DateTime<Utc>) -> Result<TickOutcome, EngineError> {
        let mut outcome = TickOutcome::default();
        if self.state.effective().is_none() {
            return Ok(outcome);
        }
        for p in self.state.periods_due(now) {
            self.append(LogKind::PeriodClose, &PeriodCloseBody { period: p }, now)?;
            outcome.closed.push(p);
        }
        let (sent, pending) = self.notify_low_scores(now)?;
        outcome.dispatched += sent;
        outcome.pending += pending;

        let mut dispatcher = ReminderDispatcher::new();
        for n in &self.state.notifications {
            if let Notification::Reminder(r) = &n.notification {
                dispatcher.mark_sent(&r.node_id, r.period_end);
            }
        }
        let part = partition(self.state.task_instances(now));
        let due = dispatcher.due(&part, now, &self.state.settings().lead_times);
        for r in due {
            if outcome.pending == 0 && self.dispatch(Notification::Reminder(r), now)? {
                outcome.dispatched += 1;
            } else {
                outcome.pending += 1;
            }
        }
        Ok(outcome)
    }

    /// Writes a snapshot of the current state.
    pub fn snapshot(&self) -> Result<PathBuf, EngineError> {
        Ok(write_snapshot(
            &self.dir,
            &Snapshot {
                as_of_sequence: self.state.last_sequence,
                state: &self.state,
            },
        )?)
    }
}
