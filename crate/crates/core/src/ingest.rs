//! Sensor events, event-to-node mapping and the alarm case state machine.

use std::collections::BTreeSet;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    classify_event, Category, Enterprise, NodeId, PositionId, RiskLevel, TriggerKind,
};
use crate::scoring::TriggeredTask;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorEvent {
    pub event_id: String,
    pub device_id: String,
    pub category: Category,
    pub severity: RiskLevel,
    pub observed_at: DateTime<Utc>,
    /// Opaque attachment reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("malformed event: {0}")]
    MalformedEvent(String),
    #[error("alarm case {case_id}: cannot go from {from:?} to {to:?}")]
    InvalidTransition {
        case_id: String,
        from: AlarmState,
        to: AlarmState,
    },
    #[error("processing start {start} is after end {end}")]
    InvalidTimes {
        start: DateTime<Utc>,
        end: DateTime<Utc>,
    },
}

impl SensorEvent {
    pub fn check(&self, ingested_at: DateTime<Utc>) -> Result<(), IngestError> {
        if self.event_id.trim().is_empty() {
            return Err(IngestError::MalformedEvent("empty event_id".into()));
        }
        if self.category.as_str().trim().is_empty() {
            return Err(IngestError::MalformedEvent("empty category".into()));
        }
        if self.observed_at > ingested_at {
            return Err(IngestError::MalformedEvent(format!(
                "event {} observed at {} after ingestion at {}",
                self.event_id, self.observed_at, ingested_at
            )));
        }
        Ok(())
    }

    pub fn raises_alarm(&self) -> bool {
        self.severity.is_high()
    }
}

/// Nodes an event maps to: their boundary covers the category and their
/// trigger fires on it.
pub fn map_event(event: &SensorEvent, ent: &Enterprise) -> Vec<NodeId> {
    ent.nodes()
        .filter(|n| n.trigger.fires_on(&event.category))
        .filter(|n| {
            ent.boundary(&n.boundary_id)
                .is_some_and(|b| classify_event(b, &event.category).is_covered())
        })
        .map(|n| n.node_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// One fresh task instance per mapped event-triggered node, due one
/// response budget after the observation.
pub fn spawn_tasks(event: &SensorEvent, mapped: &[NodeId], ent: &Enterprise) -> Vec<TriggeredTask> {
    mapped
        .iter()
        .filter_map(|id| ent.node(id))
        .filter(|n| n.trigger.kind == TriggerKind::EventTriggered)
        .map(|n| TriggeredTask {
            task_id: format!("{}/{}", event.event_id, n.node_id),
            node_id: n.node_id.clone(),
            event_id: event.event_id.clone(),
            triggered_at: event.observed_at,
            deadline: event.observed_at + Duration::seconds(n.response_budget_secs() as i64),
        })
        .collect()
}

/// The node that absorbs alarm handling for `category`: a flagged
/// alarm-handling node if any, else the first event-triggered node.
pub fn alarm_handling_node<'a>(
    ent: &'a Enterprise,
    category: &Category,
) -> Option<&'a crate::model::ResponsibilityNode> {
    let mut candidates: Vec<_> = ent
        .nodes()
        .filter(|n| n.trigger.fires_on(category))
        .collect();
    candidates.sort_by(|a, b| {
        b.alarm_handling
            .cmp(&a.alarm_handling)
            .then_with(|| a.node_id.cmp(&b.node_id))
    });
    candidates.into_iter().next()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlarmState {
    Raised,
    Notified,
    Handling,
    Closed,
}

impl AlarmState {
    pub fn can_go_to(self, to: AlarmState) -> bool {
        use AlarmState::*;
        matches!(
            (self, to),
            (Raised, Notified) | (Notified, Handling) | (Handling, Closed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmNotification {
    pub notification_id: String,
    pub case_id: String,
    pub recipient: PositionId,
    pub dispatched_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acknowledged_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandlingReport {
    #[serde(default)]
    pub notified_parties: BTreeSet<PositionId>,
    pub processing_start: DateTime<Utc>,
    pub processing_end: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlarmCase {
    pub case_id: String,
    pub event_id: String,
    pub category: Category,
    pub state: AlarmState,
    pub raised_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duty_officer: Option<PositionId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handling_node: Option<NodeId>,
    /// No duty officer could be found for the category.
    pub unassigned: bool,
    pub notified_parties: BTreeSet<PositionId>,
    pub notifications: Vec<AlarmNotification>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processing_start: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processing_end: Option<DateTime<Utc>>,
    /// Log sequence of the last change.
    pub updated_seq: u64,
}

pub fn case_id_for(event_id: &str) -> String {
    format!("case-{event_id}")
}

impl AlarmCase {
    fn go(&mut self, to: AlarmState) -> Result<(), IngestError> {
        if !self.state.can_go_to(to) {
            return Err(IngestError::InvalidTransition {
                case_id: self.case_id.clone(),
                from: self.state,
                to,
            });
        }
        self.state = to;
        Ok(())
    }

    /// Opens a case and, when a duty officer exists, notifies them.
    pub fn raise(event: &SensorEvent, ent: &Enterprise, at: DateTime<Utc>, seq: u64) -> AlarmCase {
        let node = alarm_handling_node(ent, &event.category);
        let case_id = case_id_for(&event.event_id);
        let mut case = AlarmCase {
            case_id: case_id.clone(),
            event_id: event.event_id.clone(),
            category: event.category.clone(),
            state: AlarmState::Raised,
            raised_at: at,
            duty_officer: node.map(|n| n.position_id.clone()),
            handling_node: node.map(|n| n.node_id.clone()),
            unassigned: node.is_none(),
            notified_parties: BTreeSet::new(),
            notifications: Vec::new(),
            processing_start: None,
            processing_end: None,
            updated_seq: seq,
        };
        if let Some(officer) = case.duty_officer.clone() {
            case.notifications.push(AlarmNotification {
                notification_id: format!("{case_id}/1"),
                case_id,
                recipient: officer,
                dispatched_at: at,
                acknowledged_at: None,
            });
            case.state = AlarmState::Notified;
        }
        case
    }

    pub fn acknowledge(&mut self, at: DateTime<Utc>, seq: u64) -> Result<(), IngestError> {
        self.go(AlarmState::Handling)?;
        for n in &mut self.notifications {
            n.acknowledged_at.get_or_insert(at.max(n.dispatched_at));
        }
        self.updated_seq = seq;
        Ok(())
    }

    pub fn record_handling(
        &mut self,
        report: &HandlingReport,
        at: DateTime<Utc>,
        seq: u64,
    ) -> Result<(), IngestError> {
        if report.processing_start > report.processing_end {
            return Err(IngestError::InvalidTimes {
                start: report.processing_start,
                end: report.processing_end,
            });
        }
        if self.state == AlarmState::Notified {
            // handling reported without a separate acknowledgement
            self.go(AlarmState::Handling)?;
        }
        self.go(AlarmState::Closed)?;
        for n in &mut self.notifications {
            n.acknowledged_at.get_or_insert(at.max(n.dispatched_at));
        }
        self.notified_parties = report.notified_parties.clone();
        self.processing_start = Some(report.processing_start);
        self.processing_end = Some(report.processing_end);
        self.updated_seq = seq;
        Ok(())
    }

    /// Whether `report` matches what this closed case already recorded.
    pub fn same_handling(&self, report: &HandlingReport) -> bool {
        self.state == AlarmState::Closed
            && self.processing_start == Some(report.processing_start)
            && self.processing_end == Some(report.processing_end)
            && self.notified_parties == report.notified_parties
    }

    pub fn is_open(&self) -> bool {
        self.state != AlarmState::Closed
    }
}

/// 100 within the budget, falling linearly to 0 at twice the budget.
pub fn handling_completion(start: DateTime<Utc>, end: DateTime<Utc>, budget_secs: u64) -> f64 {
    let took = (end - start).num_milliseconds() as f64 / 1000.0;
    let budget = budget_secs as f64;
    if took <= budget {
        100.0
    } else if budget == 0.0 {
        0.0
    } else {
        (100.0 * (2.0 * budget - took) / budget).clamp(0.0, 100.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::*;
    use crate::model::{ResponsibilitySet, TriggerMethod};
    use proptest::prelude::*;

    fn ent(with_officer: bool) -> Enterprise {
        let mut set = ResponsibilitySet::empty("s", "security");
        set.boundaries
            .push(boundary("b", &["fire", "crowd"], &["fire"]));
        set.positions.push(position("officer", "security", None));
        set.positions.push(position("patrol", "security", None));
        set.nodes.push(node("inspect", "patrol", "b", 1.0));
        if with_officer {
            let mut a = node("alarm", "officer", "b", 1.0);
            a.trigger = TriggerMethod::on_event("fire");
            a.alarm_handling = true;
            set.nodes.push(a);
            let mut r = node("respond", "patrol", "b", 1.0);
            r.trigger = TriggerMethod::on_event("fire");
            set.nodes.push(r);
        }
        Enterprise {
            enterprise_id: "e".into(),
            name: "e".into(),
            utc_offset_minutes: 0,
            risks: vec![],
            sets: vec![set],
        }
    }

    fn event(category: &str, severity: RiskLevel) -> SensorEvent {
        SensorEvent {
            event_id: "e1".into(),
            device_id: "smoke-3".into(),
            category: category.into(),
            severity,
            observed_at: anchor(),
            payload: None,
        }
    }

    #[test]
    fn mapping_matches_scan() {
        let ent = ent(true);
        let ev = event("fire", RiskLevel::Critical);
        let mapped = map_event(&ev, &ent);
        let oracle: Vec<NodeId> = ent
            .nodes()
            .filter(|n| {
                n.trigger.kind == TriggerKind::EventTriggered
                    && n.trigger.event_category == Some("fire".into())
            })
            .map(|n| n.node_id.clone())
            .collect();
        assert_eq!(mapped, oracle);
        assert_eq!(spawn_tasks(&ev, &mapped, &ent).len(), 2);
        assert!(map_event(&event("crowd", RiskLevel::Medium), &ent).is_empty());
    }

    #[test]
    fn fire_alarm_is_notified() {
        let ent = ent(true);
        let ev = event("fire", RiskLevel::Critical);
        assert!(ev.raises_alarm());
        assert!(!event("crowd", RiskLevel::Medium).raises_alarm());
        let case = AlarmCase::raise(&ev, &ent, anchor(), 1);
        assert_eq!(case.state, AlarmState::Notified);
        assert_eq!(case.notifications.len(), 1);
        assert_eq!(case.duty_officer, Some("officer".into()));
        assert_eq!(case.handling_node, Some("alarm".into()));
    }

    #[test]
    fn missing_duty_officer_leaves_case_raised() {
        let case = AlarmCase::raise(&event("fire", RiskLevel::High), &ent(false), anchor(), 1);
        assert_eq!(case.state, AlarmState::Raised);
        assert!(case.unassigned);
    }

    #[test]
    fn handling_closes_case() {
        let ent = ent(true);
        let mut case = AlarmCase::raise(&event("fire", RiskLevel::Critical), &ent, anchor(), 1);
        let report = HandlingReport {
            notified_parties: ["patrol".into()].into(),
            processing_start: anchor(),
            processing_end: anchor() + Duration::minutes(8),
        };
        let backwards = HandlingReport {
            processing_start: report.processing_end,
            processing_end: report.processing_start,
            ..report.clone()
        };
        assert!(matches!(
            case.record_handling(&backwards, anchor(), 2),
            Err(IngestError::InvalidTimes { .. })
        ));
        case.record_handling(&report, anchor(), 2).unwrap();
        assert_eq!(case.state, AlarmState::Closed);
        assert!(case.same_handling(&report));
        assert!(case.record_handling(&report, anchor(), 3).is_err());
    }

    #[test]
    fn completion_scale() {
        let t = anchor();
        let m = |mins: i64| t + Duration::minutes(mins);
        assert_eq!(handling_completion(t, m(8), 600), 100.0);
        assert_eq!(handling_completion(t, m(10), 600), 100.0);
        assert_eq!(handling_completion(t, m(15), 600), 50.0);
        assert_eq!(handling_completion(t, m(20), 600), 0.0);
        assert_eq!(handling_completion(t, m(45), 600), 0.0);
    }

    fn any_state() -> impl Strategy<Value = AlarmState> {
        prop_oneof![
            Just(AlarmState::Raised),
            Just(AlarmState::Notified),
            Just(AlarmState::Handling),
            Just(AlarmState::Closed),
        ]
    }

    proptest! {
        #[test]
        fn transitions_follow_the_chain(attempts in proptest::collection::vec(any_state(), 0..20)) {
            let allowed = [
                (AlarmState::Raised, AlarmState::Notified),
                (AlarmState::Notified, AlarmState::Handling),
                (AlarmState::Handling, AlarmState::Closed),
            ];
            let mut case = AlarmCase::raise(&event("fire", RiskLevel::High), &ent(false), anchor(), 0);
            for to in attempts {
                let from = case.state;
                let ok = case.go(to).is_ok();
                prop_assert_eq!(ok, allowed.contains(&(from, to)));
                prop_assert!(case.state >= from);
            }
        }
    }
}
