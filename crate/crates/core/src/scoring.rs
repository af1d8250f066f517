//! Evaluation and score composition.
//!
//! The per-step operations are pure functions. [`ScoreContext`] assembles
//! their inputs from accumulated records so that the same code path serves
//! both period close and the in-progress (real-time) score.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Category, CollectionMethod, DepartmentId, Enterprise, EvaluationMethod, ListId, NodeId,
    PositionId, ResponsibilityCategory, ResponsibilityList, ResponsibilityNode, TriggerKind,
};
use crate::period::Period;

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FulfillmentRecord {
    pub record_id: String,
    pub node_id: NodeId,
    pub period_start: DateTime<Utc>,
    pub period_end: DateTime<Utc>,
    pub source: CollectionMethod,
    /// Opaque attachment references (photos, documents, audio, video).
    #[serde(default)]
    pub evidence: Vec<String>,
    /// Set from the system clock at ingestion.
    pub submitted_at: DateTime<Utc>,
    pub completion: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extension_note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_eval: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionRecord {
    pub record_id: String,
    pub supervision_node_id: NodeId,
    pub supervised_node_id: NodeId,
    pub period_start: DateTime<Utc>,
    pub period_end: DateTime<Utc>,
    pub supervisory_score: f64,
    pub supervisory_max: f64,
    pub submitted_at: DateTime<Utc>,
}

/// One duty slot and whether it was attended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttendanceRecord {
    pub record_id: String,
    pub position_id: PositionId,
    pub slot_start: DateTime<Utc>,
    pub attended: bool,
    pub submitted_at: DateTime<Utc>,
}

/// An assessor score (EVALUATION) or a vote (VOTING) for a position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentRecord {
    pub record_id: String,
    pub position_id: PositionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<NodeId>,
    pub method: EvaluationMethod,
    pub assessor: String,
    pub score: f64,
    pub assessed_at: DateTime<Utc>,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringPolicy {
    /// Share of list completion inside task completion.
    pub alpha: f64,
    /// Share of task completion in the total.
    pub beta: f64,
    pub self_eval_cap: f64,
    pub supervisory_threshold: f64,
    pub deduction_fraction: f64,
}

pub const SUPERVISORY_THRESHOLD: f64 = 0.5;

impl Default for ScoringPolicy {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 0.7,
            self_eval_cap: 10.0,
            supervisory_threshold: SUPERVISORY_THRESHOLD,
            deduction_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("supervised node {0} has no completion entry for the period")]
    MissingCompletion(NodeId),
    #[error("invalid scoring policy: {0}")]
    InvalidPolicy(String),
}

impl ScoringPolicy {
    pub fn check(&self) -> Result<(), ScoringError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.supervisory_threshold != SUPERVISORY_THRESHOLD {
            return Err(ScoringError::InvalidPolicy(
                "supervisory threshold is fixed at 0.5".into(),
            ));
        }
        if !(unit(self.alpha) && unit(self.beta) && unit(self.deduction_fraction)) {
            return Err(ScoringError::InvalidPolicy(
                "alpha, beta and deduction fraction must lie in [0, 1]".into(),
            ));
        }
        if self.self_eval_cap.is_nan() || self.self_eval_cap < 0.0 {
            return Err(ScoringError::InvalidPolicy(
                "self-eval cap must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScoreGate {
    Direct,
    /// Scoring deferred until the related risk clears.
    RiskHold,
}

/// Mandatory nodes whose risk category is currently alarming are held.
pub fn check_mandatory(
    node: &ResponsibilityNode,
    risk_category: Option<&Category>,
    record: &FulfillmentRecord,
    open_risks: &BTreeSet<Category>,
) -> ScoreGate {
    debug_assert_eq!(record.node_id, node.node_id);
    match risk_category {
        Some(c) if node.mandatory && open_risks.contains(c) => ScoreGate::RiskHold,
        _ => ScoreGate::Direct,
    }
}

pub fn apply_self_eval(record: &FulfillmentRecord, policy: &ScoringPolicy) -> f64 {
    match (record.self_eval, &record.extension_note) {
        (Some(s), Some(_)) => (s * policy.self_eval_cap / 100.0).min(policy.self_eval_cap),
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deduction {
    pub node_id: NodeId,
    pub amount: f64,
}

/// Deducts `δ × completion` from each supervised node with a supervision
/// record strictly below half its maximum. A node is deducted at most once
/// per call.
pub fn apply_supervisory_rule<'a>(
    records: impl IntoIterator<Item = &'a SupervisionRecord>,
    completions: &BTreeMap<NodeId, f64>,
    policy: &ScoringPolicy,
) -> Result<Vec<Deduction>, ScoringError> {
    let mut failing: BTreeSet<&NodeId> = BTreeSet::new();
    for r in records {
        if !completions.contains_key(&r.supervised_node_id) {
            return Err(ScoringError::MissingCompletion(
                r.supervised_node_id.clone(),
            ));
        }
        if r.supervisory_score < policy.supervisory_threshold * r.supervisory_max {
            failing.insert(&r.supervised_node_id);
        }
    }
    Ok(failing
        .into_iter()
        .map(|n| Deduction {
            node_id: n.clone(),
            amount: policy.deduction_fraction * completions[n],
        })
        .collect())
}

/// Weighted completion per list minus the list's deductions, clamped to
/// [0, 100]. Items missing from `completions` count as 0; items in
/// `not_owed` are left out.
pub fn recommend_scores<'a>(
    lists: impl IntoIterator<Item = &'a ResponsibilityList>,
    weight: impl Fn(&NodeId) -> f64,
    completions: &BTreeMap<NodeId, f64>,
    not_owed: &BTreeSet<NodeId>,
    deductions: &[Deduction],
) -> BTreeMap<ListId, f64> {
    let mut out = BTreeMap::new();
    for list in lists {
        let (mut num, mut den) = (0.0, 0.0);
        for item in list.items.iter().filter(|i| !not_owed.contains(*i)) {
            let w = weight(item);
            num += w * completions.get(item).copied().unwrap_or(0.0);
            den += w;
        }
        let base = if den > 0.0 { num / den } else { 100.0 };
        let deducted: f64 = deductions
            .iter()
            .filter(|d| list.items.contains(&d.node_id))
            .map(|d| d.amount)
            .sum();
        out.insert(
            list.list_id.clone(),
            round2((base - deducted).clamp(0.0, 100.0)),
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub position_id: PositionId,
    pub period: Period,
    pub list_completion: f64,
    pub attendance: f64,
    pub performance_assessment: f64,
    pub self_eval_bonus: f64,
    pub supervisory_deductions: Vec<Deduction>,
    pub total: f64,
}

/// Raw components before composition.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub list_completion: f64,
    pub attendance: f64,
    pub performance_assessment: f64,
    pub self_eval_bonus: f64,
    pub deductions: Vec<Deduction>,
}

pub fn compose_total(c: &Components, policy: &ScoringPolicy) -> f64 {
    let task = policy.alpha * c.list_completion + (1.0 - policy.alpha) * c.attendance;
    let deducted: f64 = c.deductions.iter().map(|d| d.amount).sum();
    (policy.beta * task + (1.0 - policy.beta) * c.performance_assessment + c.self_eval_bonus
        - deducted)
        .clamp(0.0, 100.0)
}

pub fn breakdown(
    position_id: PositionId,
    period: Period,
    c: Components,
    policy: &ScoringPolicy,
) -> ScoreBreakdown {
    let total = round2(compose_total(&c, policy));
    ScoreBreakdown {
        position_id,
        period,
        list_completion: round2(c.list_completion),
        attendance: round2(c.attendance),
        performance_assessment: round2(c.performance_assessment),
        self_eval_bonus: round2(c.self_eval_bonus),
        supervisory_deductions: c
            .deductions
            .into_iter()
            .map(|d| Deduction {
                amount: round2(d.amount),
                ..d
            })
            .collect(),
        total,
    }
}

/// A fulfillment record as held in state, with its scoring gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredFulfillment {
    pub record: FulfillmentRecord,
    pub gate: ScoreGate,
    /// For held records: when the related risk cleared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub released_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_on: Option<Category>,
}

impl StoredFulfillment {
    pub fn counts_at(&self, cutoff: DateTime<Utc>) -> bool {
        self.record.submitted_at <= cutoff
            && match self.gate {
                ScoreGate::Direct => true,
                ScoreGate::RiskHold => self.released_at.is_some_and(|r| r <= cutoff),
            }
    }
}

/// A task instance spawned by an event for an event-triggered node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggeredTask {
    pub task_id: String,
    pub node_id: NodeId,
    pub event_id: String,
    pub triggered_at: DateTime<Utc>,
    pub deadline: DateTime<Utc>,
}

/// Per-position score report for one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub position_id: PositionId,
    pub department_id: DepartmentId,
    pub period: Period,
    pub breakdown: ScoreBreakdown,
    pub recommended: BTreeMap<ListId, f64>,
    /// Records still on risk hold at the cutoff, not counted.
    pub held_records: Vec<String>,
    pub realtime: bool,
}

/// Read-only view over accumulated records.
pub struct ScoreContext<'a> {
    pub enterprise: &'a Enterprise,
    pub fulfillments: &'a [StoredFulfillment],
    pub supervisions: &'a [SupervisionRecord],
    pub attendance: &'a [AttendanceRecord],
    pub assessments: &'a [AssessmentRecord],
    pub triggered: &'a [TriggeredTask],
}

/// Completion of one node across a period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeCompletion {
    Owed(f64),
    NotOwed,
}

fn in_range(t: DateTime<Utc>, (s, e): (DateTime<Utc>, DateTime<Utc>)) -> bool {
    s <= t && t < e
}

impl<'a> ScoreContext<'a> {
    fn offset(&self) -> i32 {
        self.enterprise.utc_offset_minutes
    }

    /// (period_start, completion) of every counted submission for `node`.
    fn submissions(
        &self,
        node: &ResponsibilityNode,
        cutoff: DateTime<Utc>,
    ) -> Vec<(DateTime<Utc>, f64)> {
        let mut out: Vec<(DateTime<Utc>, f64)> = self
            .fulfillments
            .iter()
            .filter(|f| f.record.node_id == node.node_id && f.counts_at(cutoff))
            .map(|f| (f.record.period_start, f.record.completion))
            .collect();
        if node.category == ResponsibilityCategory::Supervision {
            // a submitted supervision record fulfils the supervision duty
            out.extend(
                self.supervisions
                    .iter()
                    .filter(|s| s.supervision_node_id == node.node_id && s.submitted_at <= cutoff)
                    .map(|s| (s.period_start, 100.0)),
            );
        }
        out
    }

    pub fn node_completion(
        &self,
        node: &ResponsibilityNode,
        period: Period,
        cutoff: DateTime<Utc>,
    ) -> NodeCompletion {
        let bounds = period.bounds(self.offset());
        let subs = self.submissions(node, cutoff);
        let best_in = |w: (DateTime<Utc>, DateTime<Utc>)| {
            subs.iter()
                .filter(|(at, _)| in_range(*at, w))
                .map(|(_, c)| *c)
                .fold(0.0, f64::max)
        };
        let mean = |values: Vec<f64>| {
            if values.is_empty() {
                NodeCompletion::NotOwed
            } else {
                NodeCompletion::Owed(values.iter().sum::<f64>() / values.len() as f64)
            }
        };
        if node.cycle.is_periodic() {
            let windows = node.cycle.windows_starting_in(bounds.0, bounds.1);
            return mean(windows.into_iter().map(best_in).collect());
        }
        if node.trigger.kind == TriggerKind::EventTriggered {
            let mut starts: Vec<DateTime<Utc>> = self
                .triggered
                .iter()
                .filter(|t| t.node_id == node.node_id)
                .map(|t| t.triggered_at)
                .filter(|t| in_range(*t, bounds) && *t <= cutoff)
                .collect();
            starts.sort();
            let windows = starts.iter().enumerate().map(|(i, s)| {
                let end = starts
                    .get(i + 1)
                    .copied()
                    .unwrap_or(DateTime::<Utc>::MAX_UTC);
                (*s, end)
            });
            return mean(windows.map(best_in).collect());
        }
        NodeCompletion::Owed(best_in(bounds))
    }

    pub fn position_lists(
        &self,
        position: &PositionId,
        period: Period,
    ) -> Vec<&'a ResponsibilityList> {
        self.enterprise
            .lists()
            .filter(|l| &l.position_id == position && l.reporting_period == period.kind())
            .collect()
    }

    /// Full score report for `position` over `period`, counting what was
    /// submitted up to `cutoff`. `None` when the position has no list for
    /// this kind of period.
    pub fn score(
        &self,
        position: &PositionId,
        period: Period,
        cutoff: DateTime<Utc>,
        policy: &ScoringPolicy,
    ) -> Option<ScoreReport> {
        let ent = self.enterprise;
        let department_id = ent.position(position)?.department_id.clone();
        let lists = self.position_lists(position, period);
        if lists.is_empty() {
            return None;
        }
        let bounds = period.bounds(self.offset());
        let items: BTreeSet<&NodeId> = lists.iter().flat_map(|l| l.items.iter()).collect();

        let mut completions = BTreeMap::new();
        let mut not_owed = BTreeSet::new();
        for id in &items {
            let Some(node) = ent.node(id) else { continue };
            match self.node_completion(node, period, cutoff) {
                NodeCompletion::Owed(c) => {
                    completions.insert((*id).clone(), c);
                }
                NodeCompletion::NotOwed => {
                    not_owed.insert((*id).clone());
                }
            }
        }

        let supervision: Vec<&SupervisionRecord> = self
            .supervisions
            .iter()
            .filter(|s| items.contains(&s.supervised_node_id))
            .filter(|s| s.submitted_at <= cutoff && in_range(s.period_start, bounds))
            .collect();
        let mut deduction_base = completions.clone();
        for s in &supervision {
            deduction_base
                .entry(s.supervised_node_id.clone())
                .or_insert(0.0);
        }
        let deductions =
            apply_supervisory_rule(supervision.iter().copied(), &deduction_base, policy)
                .expect("every supervised item has a completion entry");

        let weight = |id: &NodeId| ent.node(id).map(|n| n.weight).unwrap_or(0.0);
        let recommended = recommend_scores(
            lists.iter().copied(),
            weight,
            &completions,
            &not_owed,
            &deductions,
        );

        let (mut num, mut den) = (0.0, 0.0);
        for id in items.iter().filter(|i| !not_owed.contains(**i)) {
            let w = weight(id);
            num += w * completions.get(*id).copied().unwrap_or(0.0);
            den += w;
        }
        let list_completion = if den > 0.0 { num / den } else { 100.0 };

        let slots: Vec<&AttendanceRecord> = self
            .attendance
            .iter()
            .filter(|a| {
                &a.position_id == position
                    && a.submitted_at <= cutoff
                    && in_range(a.slot_start, bounds)
            })
            .collect();
        let attendance = if slots.is_empty() {
            0.0
        } else {
            100.0 * slots.iter().filter(|a| a.attended).count() as f64 / slots.len() as f64
        };

        let scores: Vec<f64> = self
            .assessments
            .iter()
            .filter(|a| {
                &a.position_id == position
                    && a.submitted_at <= cutoff
                    && in_range(a.assessed_at, bounds)
            })
            .map(|a| a.score)
            .collect();
        let performance_assessment = if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        };

        let counted: Vec<&StoredFulfillment> = self
            .fulfillments
            .iter()
            .filter(|f| {
                items.contains(&f.record.node_id) && in_range(f.record.period_start, bounds)
            })
            .collect();
        let bonus: f64 = counted
            .iter()
            .filter(|f| f.counts_at(cutoff))
            .map(|f| apply_self_eval(&f.record, policy))
            .sum();
        let held_records = counted
            .iter()
            .filter(|f| f.record.submitted_at <= cutoff && !f.counts_at(cutoff))
            .map(|f| f.record.record_id.clone())
            .collect();

        let components = Components {
            list_completion,
            attendance,
            performance_assessment,
            self_eval_bonus: bonus.min(policy.self_eval_cap),
            deductions,
        };
        Some(ScoreReport {
            position_id: position.clone(),
            department_id,
            period,
            breakdown: breakdown(position.clone(), period, components, policy),
            recommended,
            held_records,
            realtime: cutoff < bounds.1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::*;
    use crate::model::{CycleSpec, ResponsibilitySet, RiskLevel, RiskSource, TriggerMethod};
    use chrono::Duration;

    fn t(h: i64) -> DateTime<Utc> {
        anchor() + Duration::hours(h)
    }

    fn record(node: &str, at: DateTime<Utc>, completion: f64) -> FulfillmentRecord {
        FulfillmentRecord {
            record_id: format!("{node}@{}", at.timestamp()),
            node_id: node.into(),
            period_start: at,
            period_end: at + Duration::hours(1),
            source: CollectionMethod::Manual,
            evidence: vec![],
            submitted_at: at,
            completion,
            extension_note: None,
            self_eval: None,
        }
    }

    fn sup(score: f64, max: f64) -> SupervisionRecord {
        SupervisionRecord {
            record_id: "s".into(),
            supervision_node_id: "sup".into(),
            supervised_node_id: "n".into(),
            period_start: t(0),
            period_end: t(1),
            supervisory_score: score,
            supervisory_max: max,
            submitted_at: t(1),
        }
    }

    #[test]
    fn mandatory_gate() {
        let mut n = node("n", "p", "b", 1.0);
        let r = record("n", t(0), 100.0);
        let fire = Category::from("fire");
        let open: BTreeSet<Category> = [fire.clone()].into();
        n.mandatory = false;
        assert_eq!(
            check_mandatory(&n, Some(&fire), &r, &open),
            ScoreGate::Direct
        );
        n.mandatory = true;
        assert_eq!(
            check_mandatory(&n, Some(&fire), &r, &BTreeSet::new()),
            ScoreGate::Direct
        );
        assert_eq!(
            check_mandatory(&n, Some(&fire), &r, &open),
            ScoreGate::RiskHold
        );
        assert_eq!(check_mandatory(&n, None, &r, &open), ScoreGate::Direct);
    }

    #[test]
    fn self_eval_bonus() {
        let p = ScoringPolicy::default();
        let mut r = record("n", t(0), 100.0);
        assert_eq!(apply_self_eval(&r, &p), 0.0);
        r.self_eval = Some(100.0);
        assert_eq!(apply_self_eval(&r, &p), 0.0, "needs an extension note");
        r.extension_note = Some("cleared the loading dock too".into());
        assert_eq!(apply_self_eval(&r, &p), 10.0);
        r.self_eval = Some(50.0);
        assert_eq!(apply_self_eval(&r, &p), 5.0);
    }

    #[test]
    fn supervisory_rule_examples() {
        let p = ScoringPolicy::default();
        let comp = BTreeMap::from([(NodeId::from("n"), 80.0)]);
        let d = apply_supervisory_rule([&sup(49.0, 100.0)], &comp, &p).unwrap();
        assert_eq!(
            d,
            vec![Deduction {
                node_id: "n".into(),
                amount: 80.0
            }]
        );
        assert!(apply_supervisory_rule([&sup(50.0, 100.0)], &comp, &p)
            .unwrap()
            .is_empty());

        let half = ScoringPolicy {
            deduction_fraction: 0.5,
            ..p.clone()
        };
        let comp = BTreeMap::from([(NodeId::from("n"), 60.0)]);
        let d = apply_supervisory_rule([&sup(30.0, 100.0)], &comp, &half).unwrap();
        assert_eq!(d[0].amount, 30.0);

        assert!(matches!(
            apply_supervisory_rule([&sup(10.0, 100.0)], &BTreeMap::new(), &p),
            Err(ScoringError::MissingCompletion(_))
        ));
    }

    #[test]
    fn supervisory_threshold_is_strict() {
        let p = ScoringPolicy::default();
        let comp = BTreeMap::from([(NodeId::from("n"), 70.0)]);
        for (score, deducted) in [(499.0, true), (500.0, false), (501.0, false)] {
            let d = apply_supervisory_rule([&sup(score, 1000.0)], &comp, &p).unwrap();
            assert_eq!(!d.is_empty(), deducted, "{score}/1000");
        }
    }

    #[test]
    fn recommended_scores() {
        let l = list("l", "p", &["a", "b"]);
        let w = |id: &NodeId| if id.as_str() == "a" { 1.0 } else { 3.0 };
        let none = BTreeSet::new();
        let full = BTreeMap::from([("a".into(), 100.0), ("b".into(), 100.0)]);
        assert_eq!(
            recommend_scores([&l], w, &full, &none, &[])[&ListId::from("l")],
            100.0
        );
        let partial = BTreeMap::from([("a".into(), 100.0)]);
        assert_eq!(
            recommend_scores([&l], w, &partial, &none, &[])[&ListId::from("l")],
            25.0
        );

        let single = list("s", "p", &["a"]);
        let comp = BTreeMap::from([("a".into(), 80.0)]);
        let d = [Deduction {
            node_id: "a".into(),
            amount: 80.0,
        }];
        assert_eq!(
            recommend_scores([&single], |_| 1.0, &comp, &none, &d)[&ListId::from("s")],
            0.0
        );
    }

    #[test]
    fn composition_examples() {
        let p = ScoringPolicy::default();
        let c = |l, a, pa, bonus| Components {
            list_completion: l,
            attendance: a,
            performance_assessment: pa,
            self_eval_bonus: bonus,
            deductions: vec![],
        };
        assert_eq!(
            round2(compose_total(&c(100.0, 100.0, 100.0, 0.0), &p)),
            100.0
        );
        assert_eq!(round2(compose_total(&c(100.0, 0.0, 0.0, 0.0), &p)), 56.0);
        assert_eq!(round2(compose_total(&c(100.0, 0.0, 0.0, 10.0), &p)), 66.0);
        assert_eq!(compose_total(&c(100.0, 100.0, 100.0, 10.0), &p), 100.0);
    }

    #[test]
    fn policy_check() {
        ScoringPolicy::default().check().unwrap();
        let bad = ScoringPolicy {
            supervisory_threshold: 0.4,
            ..Default::default()
        };
        assert!(bad.check().is_err());
        let bad = ScoringPolicy {
            alpha: 1.5,
            ..Default::default()
        };
        assert!(bad.check().is_err());
    }

    fn ctx_fixture() -> Enterprise {
        let mut set = ResponsibilitySet::empty("s", "d");
        set.boundaries.push(boundary("b", &["fire"], &["fire"]));
        set.positions.push(position("p", "d", None));
        let mut a = node("a", "p", "b", 1.0);
        a.cycle = CycleSpec::periodic(7 * 86_400, anchor());
        let mut b = node("b", "p", "b", 1.0);
        b.cycle = CycleSpec::periodic(7 * 86_400, anchor());
        let mut ev = node("ev", "p", "b", 1.0);
        ev.cycle = CycleSpec::aperiodic();
        ev.trigger = TriggerMethod::on_event("fire");
        set.nodes.extend([a, b, ev]);
        set.lists.push(list("l", "p", &["a", "b", "ev"]));
        Enterprise {
            enterprise_id: "e".into(),
            name: "e".into(),
            utc_offset_minutes: 0,
            risks: vec![RiskSource {
                risk_id: "r".into(),
                description: "fire".into(),
                level: RiskLevel::Critical,
                category: "fire".into(),
            }],
            sets: vec![set],
        }
    }

    fn week() -> Period {
        Period::containing(crate::model::ReportingPeriod::Weekly, anchor(), 0)
    }

    #[test]
    fn realtime_progression() {
        let ent = ctx_fixture();
        let p = ScoringPolicy::default();
        let mut fulfilments = vec![];
        let ctx = |f: &[StoredFulfillment]| {
            ScoreContext {
                enterprise: &ent,
                fulfillments: f,
                supervisions: &[],
                attendance: &[],
                assessments: &[],
                triggered: &[],
            }
            .score(&"p".into(), week(), t(30), &p)
            .unwrap()
        };
        let empty = ctx(&fulfilments);
        assert_eq!(empty.breakdown.list_completion, 0.0);
        assert_eq!(empty.breakdown.total, 0.0);
        assert!(empty.realtime);

        fulfilments.push(StoredFulfillment {
            record: record("a", t(5), 100.0),
            gate: ScoreGate::Direct,
            released_at: None,
            held_on: None,
        });
        let half = ctx(&fulfilments);
        // ev has no triggered instance, so it is not owed
        assert_eq!(half.breakdown.list_completion, 50.0);
    }

    #[test]
    fn held_record_counts_after_release() {
        let ent = ctx_fixture();
        let p = ScoringPolicy::default();
        let f = vec![StoredFulfillment {
            record: record("a", t(5), 100.0),
            gate: ScoreGate::RiskHold,
            released_at: Some(t(10)),
            held_on: Some("fire".into()),
        }];
        let ctx = ScoreContext {
            enterprise: &ent,
            fulfillments: &f,
            supervisions: &[],
            attendance: &[],
            assessments: &[],
            triggered: &[],
        };
        let before = ctx.score(&"p".into(), week(), t(8), &p).unwrap();
        assert_eq!(before.breakdown.list_completion, 0.0);
        assert_eq!(before.held_records, vec![f[0].record.record_id.clone()]);
        let after = ctx.score(&"p".into(), week(), t(12), &p).unwrap();
        assert_eq!(after.breakdown.list_completion, 50.0);
    }

    #[test]
    fn triggered_instances_are_owed() {
        let ent = ctx_fixture();
        let triggered = vec![TriggeredTask {
            task_id: "t1".into(),
            node_id: "ev".into(),
            event_id: "e1".into(),
            triggered_at: t(20),
            deadline: t(21),
        }];
        let ctx = ScoreContext {
            enterprise: &ent,
            fulfillments: &[],
            supervisions: &[],
            attendance: &[],
            assessments: &[],
            triggered: &triggered,
        };
        let ev = ent.node(&"ev".into()).unwrap();
        assert_eq!(
            ctx.node_completion(ev, week(), t(10)),
            NodeCompletion::NotOwed
        );
        assert_eq!(
            ctx.node_completion(ev, week(), t(30)),
            NodeCompletion::Owed(0.0)
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn totals_stay_in_range(
                l in 0.0f64..=100.0, a in 0.0f64..=100.0, pa in 0.0f64..=100.0,
                bonus in 0.0f64..=10.0, d in proptest::collection::vec(0.0f64..=100.0, 0..4),
                alpha in 0.0f64..=1.0, beta in 0.0f64..=1.0,
            ) {
                let p = ScoringPolicy { alpha, beta, ..Default::default() };
                let c = Components {
                    list_completion: l, attendance: a, performance_assessment: pa, self_eval_bonus: bonus,
                    deductions: d.into_iter().enumerate().map(|(i, amount)| Deduction { node_id: format!("n{i}").into(), amount }).collect(),
                };
                let b = breakdown("p".into(), "2026-W10".parse().unwrap(), c, &p);
                prop_assert!((0.0..=100.0).contains(&b.total));
            }

            #[test]
            fn recommended_is_weight_scale_invariant(
                items in proptest::collection::vec((0.1f64..10.0, proptest::option::of(0.0f64..=100.0)), 1..8),
                k in prop_oneof![Just(0.5), Just(2.0), Just(10.0)],
            ) {
                let ids: Vec<String> = (0..items.len()).map(|i| format!("n{i}")).collect();
                let l = ResponsibilityList {
                    list_id: "l".into(), position_id: "p".into(),
                    items: ids.iter().map(|i| NodeId::from(i.as_str())).collect(),
                    mandatory: true, reporting_period: crate::model::ReportingPeriod::Weekly,
                };
                let weights: BTreeMap<NodeId, f64> = ids.iter().zip(&items).map(|(i, (w, _))| (NodeId::from(i.as_str()), *w)).collect();
                let comp: BTreeMap<NodeId, f64> = ids.iter().zip(&items).filter_map(|(i, (_, c))| c.map(|c| (NodeId::from(i.as_str()), c))).collect();
                let none = BTreeSet::new();
                let base = recommend_scores([&l], |n| weights[n], &comp, &none, &[]);
                let scaled = recommend_scores([&l], |n| weights[n] * k, &comp, &none, &[]);
                prop_assert_eq!(base, scaled);
            }
        }
    }
}
