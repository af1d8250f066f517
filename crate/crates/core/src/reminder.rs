//! Self-reminders: split task instances into quiet and reminder sets and
//! order the reminder queue by expiration.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{NodeId, PositionId, RiskLevel};
use crate::notify::{Notification, Notifier, ReminderNotification};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub node_id: NodeId,
    pub position_id: PositionId,
    pub periodic: bool,
    pub risk_level: RiskLevel,
    pub weight: f64,
    pub period_start: DateTime<Utc>,
    pub period_end: DateTime<Utc>,
    pub executed: bool,
    pub scored: bool,
    /// True when no supervision is required or supervision data is in.
    pub supervision_ok: bool,
    /// Aperiodic tasks only.
    pub data_valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_score: Option<f64>,
}

impl TaskInstance {
    /// Whether the task needs no reminder.
    pub fn is_quiet(&self) -> bool {
        if self.periodic {
            self.executed && self.scored && self.supervision_ok
        } else {
            self.data_valid
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReminderPartition {
    pub quiet: Vec<TaskInstance>,
    /// Most urgent first.
    pub queue: Vec<TaskInstance>,
}

/// Queue order: earliest expiration, then lowest score (unscored first),
/// then highest risk, then node id.
pub fn queue_order(a: &TaskInstance, b: &TaskInstance) -> Ordering {
    let score = |t: &TaskInstance| t.current_score.unwrap_or(f64::NEG_INFINITY);
    a.period_end
        .cmp(&b.period_end)
        .then_with(|| score(a).total_cmp(&score(b)))
        .then_with(|| b.risk_level.cmp(&a.risk_level))
        .then_with(|| a.node_id.cmp(&b.node_id))
}

pub fn partition(tasks: impl IntoIterator<Item = TaskInstance>) -> ReminderPartition {
    let (quiet, mut queue): (Vec<_>, Vec<_>) = tasks.into_iter().partition(TaskInstance::is_quiet);
    queue.sort_by(queue_order);
    ReminderPartition { quiet, queue }
}

/// Reminder lead time before expiration, per risk level, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadTimes(pub BTreeMap<RiskLevel, u64>);

impl Default for LeadTimes {
    fn default() -> Self {
        use RiskLevel::*;
        Self(BTreeMap::from([
            (Critical, 24 * 3600),
            (High, 12 * 3600),
            (Medium, 4 * 3600),
            (Low, 3600),
        ]))
    }
}

impl LeadTimes {
    pub fn wake_time(&self, task: &TaskInstance) -> DateTime<Utc> {
        let lead = self.0.get(&task.risk_level).copied().unwrap_or(0);
        task.period_end - Duration::seconds(lead as i64)
    }
}

pub fn next_wake(partition: &ReminderPartition, leads: &LeadTimes) -> Option<DateTime<Utc>> {
    partition.queue.iter().map(|t| leads.wake_time(t)).min()
}

pub fn reminder_key(node: &NodeId, period_end: DateTime<Utc>) -> (NodeId, DateTime<Utc>) {
    (node.clone(), period_end)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmitOutcome {
    pub dispatched: Vec<ReminderNotification>,
    /// Due but not delivered; retried on the next call.
    pub pending: Vec<ReminderNotification>,
}

/// Tracks which (node, period end) reminders went out.
#[derive(Debug, Clone, Default)]
pub struct ReminderDispatcher {
    sent: BTreeSet<(NodeId, DateTime<Utc>)>,
}

impl ReminderDispatcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn mark_sent(&mut self, node: &NodeId, period_end: DateTime<Utc>) {
        self.sent.insert(reminder_key(node, period_end));
    }

    pub fn was_sent(&self, node: &NodeId, period_end: DateTime<Utc>) -> bool {
        self.sent.contains(&reminder_key(node, period_end))
    }

    /// Reminders due at `now` that have not gone out yet, with urgency rank.
    pub fn due(
        &self,
        partition: &ReminderPartition,
        now: DateTime<Utc>,
        leads: &LeadTimes,
    ) -> Vec<ReminderNotification> {
        partition
            .queue
            .iter()
            .enumerate()
            .filter(|(_, t)| leads.wake_time(t) <= now)
            .filter(|(_, t)| !self.was_sent(&t.node_id, t.period_end))
            .map(|(i, t)| ReminderNotification {
                position_id: t.position_id.clone(),
                node_id: t.node_id.clone(),
                period_end: t.period_end,
                urgency: i + 1,
                generated_at: now,
            })
            .collect()
    }

    /// Sends every due reminder once. Failed sends stay pending and are
    /// picked up again next call.
    pub fn emit(
        &mut self,
        partition: &ReminderPartition,
        now: DateTime<Utc>,
        leads: &LeadTimes,
        notifier: &mut dyn Notifier,
    ) -> EmitOutcome {
        let mut outcome = EmitOutcome::default();
        for r in self.due(partition, now, leads) {
            if !outcome.pending.is_empty() {
                outcome.pending.push(r);
                continue;
            }
            match notifier.notify(&Notification::Reminder(r.clone())) {
                Ok(()) => {
                    self.mark_sent(&r.node_id, r.period_end);
                    outcome.dispatched.push(r);
                }
                Err(_) => outcome.pending.push(r),
            }
        }
        outcome
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::notify::MemoryNotifier;
    use chrono::TimeZone;
    use proptest::prelude::*;

    pub fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 3, 2, 0, 0, 0).unwrap()
    }

    pub fn task(id: &str, end_h: i64) -> TaskInstance {
        TaskInstance {
            node_id: id.into(),
            position_id: "p".into(),
            periodic: true,
            risk_level: RiskLevel::Low,
            weight: 1.0,
            period_start: t0(),
            period_end: t0() + Duration::hours(end_h),
            executed: false,
            scored: false,
            supervision_ok: true,
            data_valid: false,
            current_score: None,
        }
    }

    /// Literal reading of the procedure: walk the tasks, file each one by
    /// its attributes, then order the reminder set by expiration with the
    /// score ranking breaking ties. Uses a plain insertion sort.
    pub fn brute_force(tasks: &[TaskInstance]) -> (Vec<TaskInstance>, Vec<TaskInstance>) {
        let mut quiet = Vec::new();
        let mut remind: Vec<TaskInstance> = Vec::new();
        for t in tasks {
            let no_reminder = if !t.periodic {
                t.data_valid
            } else {
                t.executed && t.scored && t.supervision_ok
            };
            if no_reminder {
                quiet.push(t.clone());
            } else {
                remind.push(t.clone());
            }
        }
        fn before(a: &TaskInstance, b: &TaskInstance) -> bool {
            if a.period_end != b.period_end {
                return a.period_end < b.period_end;
            }
            match (a.current_score, b.current_score) {
                (None, Some(_)) => return true,
                (Some(_), None) => return false,
                (Some(x), Some(y)) if x != y => return x < y,
                _ => {}
            }
            if a.risk_level != b.risk_level {
                return a.risk_level > b.risk_level;
            }
            a.node_id < b.node_id
        }
        let mut sorted: Vec<TaskInstance> = Vec::new();
        for t in remind {
            let at = sorted
                .iter()
                .position(|s| before(&t, s))
                .unwrap_or(sorted.len());
            sorted.insert(at, t);
        }
        (quiet, sorted)
    }

    #[test]
    fn empty_input() {
        let p = partition(Vec::new());
        assert!(p.quiet.is_empty() && p.queue.is_empty());
    }

    #[test]
    fn completed_periodic_task_is_quiet() {
        let mut t = task("a", 10);
        t.executed = true;
        t.scored = true;
        let p = partition(vec![t]);
        assert_eq!(p.quiet.len(), 1);
        assert!(p.queue.is_empty());
    }

    #[test]
    fn missing_supervision_queues_task() {
        let mut t = task("a", 10);
        t.executed = true;
        t.scored = true;
        t.supervision_ok = false;
        assert_eq!(partition(vec![t]).queue.len(), 1);
    }

    #[test]
    fn aperiodic_tasks_follow_data_validity() {
        let mut valid = task("v", 1);
        valid.periodic = false;
        valid.data_valid = true;
        let mut invalid = valid.clone();
        invalid.node_id = "i".into();
        invalid.data_valid = false;
        invalid.executed = true;
        invalid.scored = true;
        let p = partition(vec![valid, invalid]);
        assert_eq!(p.quiet[0].node_id.as_str(), "v");
        assert_eq!(p.queue[0].node_id.as_str(), "i");
    }

    #[test]
    fn expiration_dominates_score() {
        let mut early = task("early", 1);
        early.current_score = Some(90.0);
        let mut late = task("late", 2);
        late.current_score = Some(10.0);
        let p = partition(vec![late, early]);
        let ids: Vec<_> = p.queue.iter().map(|t| t.node_id.as_str()).collect();
        assert_eq!(ids, ["early", "late"]);
    }

    #[test]
    fn lower_score_first_on_equal_expiration() {
        let mut a = task("a", 5);
        a.current_score = Some(80.0);
        let mut b = task("b", 5);
        b.current_score = Some(30.0);
        let p = partition(vec![a.clone(), b.clone()]);
        assert_eq!(p.queue[0].node_id.as_str(), "b");
        assert_eq!(brute_force(&[a, b]).1, p.queue);
    }

    #[test]
    fn wake_times() {
        let leads = LeadTimes::default();
        assert_eq!(next_wake(&ReminderPartition::default(), &leads), None);

        let mut high = task("h", 48);
        high.risk_level = RiskLevel::High;
        let p = partition(vec![high]);
        assert_eq!(next_wake(&p, &leads), Some(t0() + Duration::hours(36)));

        let p = partition(vec![task("a", 10), task("b", 12)]);
        assert_eq!(next_wake(&p, &leads), Some(t0() + Duration::hours(9)));
    }

    #[test]
    fn emit_is_idempotent_within_window() {
        let leads = LeadTimes::default();
        let mut d = ReminderDispatcher::new();
        let mut sink = MemoryNotifier::default();
        let empty = d.emit(&ReminderPartition::default(), t0(), &leads, &mut sink);
        assert!(empty.dispatched.is_empty());

        let p = partition(vec![task("a", 2), task("b", 20)]);
        let now = t0() + Duration::hours(1);
        let first = d.emit(&p, now, &leads, &mut sink);
        assert_eq!(first.dispatched.len(), 1);
        assert_eq!(first.dispatched[0].node_id.as_str(), "a");
        assert_eq!(first.dispatched[0].urgency, 1);
        let second = d.emit(&p, now + Duration::minutes(5), &leads, &mut sink);
        assert!(second.dispatched.is_empty());
        assert_eq!(sink.sent.len(), 1);
    }

    #[test]
    fn failed_dispatch_stays_pending_and_retries() {
        let leads = LeadTimes::default();
        let mut d = ReminderDispatcher::new();
        let mut sink = MemoryNotifier {
            offline: true,
            ..Default::default()
        };
        let p = partition(vec![task("a", 1), task("b", 1)]);
        let out = d.emit(&p, t0() + Duration::hours(1), &leads, &mut sink);
        assert!(out.dispatched.is_empty());
        assert_eq!(out.pending.len(), 2);
        sink.offline = false;
        let out = d.emit(&p, t0() + Duration::hours(1), &leads, &mut sink);
        assert_eq!(out.dispatched.len(), 2);
        assert!(out.pending.is_empty());
    }

    pub fn arb_task() -> impl Strategy<Value = TaskInstance> {
        (
            0u8..6,
            any::<bool>(),
            0i64..6,
            proptest::option::of(0u8..4),
            1u8..=4,
            any::<[bool; 4]>(),
        )
            .prop_map(|(id, periodic, end, score, risk, flags)| TaskInstance {
                node_id: format!("n{id}").into(),
                position_id: "p".into(),
                periodic,
                risk_level: RiskLevel::from_rank(risk).unwrap(),
                weight: 1.0,
                period_start: t0(),
                period_end: t0() + Duration::hours(end + 1),
                executed: flags[0],
                scored: flags[0] && flags[1],
                supervision_ok: flags[2],
                data_valid: flags[3],
                current_score: score.map(|s| s as f64 * 25.0),
            })
    }

    proptest! {
        #[test]
        fn partition_matches_brute_force(tasks in proptest::collection::vec(arb_task(), 0..60)) {
            let p = partition(tasks.clone());
            let (quiet, queue) = brute_force(&tasks);
            prop_assert_eq!(p.quiet.len() + p.queue.len(), tasks.len());
            prop_assert_eq!(&p.quiet, &quiet);
            prop_assert_eq!(&p.queue, &queue);
        }

        #[test]
        fn partition_is_pure(tasks in proptest::collection::vec(arb_task(), 0..30)) {
            let a = serde_json::to_string(&partition(tasks.clone())).unwrap();
            let b = serde_json::to_string(&partition(tasks)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
