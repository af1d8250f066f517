//! Incident analysis, accountability ranking, period rankings and score
//! series.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::graph::{relevance, GraphError, RelationGraph};
use crate::model::{
    classify_event, Category, DepartmentId, Enterprise, NodeId, PositionId, RiskLevel, SetId,
};
use crate::notify::{DepartmentNotification, LowScoreNotification, Notification, Notifier};
use crate::period::Period;
use crate::scoring::{ScoreBreakdown, ScoreReport};

pub const DEFAULT_LOW_SCORE_THRESHOLD: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub incident_id: String,
    pub occurred_at: DateTime<Utc>,
    pub category: Category,
    pub severity: RiskLevel,
    #[serde(default)]
    pub description: String,
    /// Filled in by analysis.
    #[serde(default)]
    pub related_node_ids: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidentAnalysis {
    pub related_node_ids: BTreeSet<NodeId>,
    pub candidate_sets: BTreeSet<SetId>,
    /// No boundary covers the incident category.
    pub unbounded: bool,
}

/// Nodes whose boundary covers the incident category, and the sets that
/// contain them.
pub fn analyze_incident(incident: &Incident, ent: &Enterprise) -> IncidentAnalysis {
    let mut related = BTreeSet::new();
    let mut sets = BTreeSet::new();
    for set in &ent.sets {
        for node in &set.nodes {
            let covered = ent
                .boundary(&node.boundary_id)
                .is_some_and(|b| classify_event(b, &incident.category).is_covered());
            if covered {
                related.insert(node.node_id.clone());
                sets.insert(set.set_id.clone());
            }
        }
    }
    IncidentAnalysis {
        unbounded: related.is_empty(),
        related_node_ids: related,
        candidate_sets: sets,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScoreSource {
    Closed,
    /// The incident period was not closed; in-progress scores were used.
    Realtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionScore {
    pub position_id: PositionId,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPosition {
    pub position_id: PositionId,
    pub total: f64,
    pub relevance: f64,
    pub index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountabilityReport {
    pub incident_id: String,
    pub period: Period,
    pub score_source: ScoreSource,
    pub unbounded: bool,
    pub related_node_ids: BTreeSet<NodeId>,
    pub candidate_sets: BTreeSet<SetId>,
    pub necessary_positions: BTreeSet<PositionId>,
    pub low_score_positions: Vec<PositionScore>,
    pub correlations: BTreeMap<PositionId, f64>,
    pub ranked: Vec<RankedPosition>,
    /// Necessary positions with no score for the period; left out of the
    /// ranking.
    pub unscored_positions: Vec<PositionId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOptions {
    pub low_score_threshold: f64,
    pub decay: f64,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self {
            low_score_threshold: DEFAULT_LOW_SCORE_THRESHOLD,
            decay: crate::graph::DEFAULT_DECAY,
        }
    }
}

/// Descending index, then lower score, then position id.
pub fn rank_order(a: &RankedPosition, b: &RankedPosition) -> std::cmp::Ordering {
    b.index
        .total_cmp(&a.index)
        .then(a.total.total_cmp(&b.total))
        .then_with(|| a.position_id.cmp(&b.position_id))
}

/// Ranks the positions implicated in `incident` by
/// `relevance × (1 − total/100)`.
pub fn accountability_rank(
    incident: &Incident,
    ent: &Enterprise,
    graph: &RelationGraph,
    period: Period,
    scores: &BTreeMap<PositionId, f64>,
    score_source: ScoreSource,
    opts: &RankOptions,
) -> Result<AccountabilityReport, GraphError> {
    let analysis = analyze_incident(incident, ent);
    let mut necessary = BTreeSet::new();
    let mut candidate_sets = analysis.candidate_sets.clone();
    for node in &analysis.related_node_ids {
        necessary.extend(graph.assigned_positions(node));
        for sup in graph.supervisors_of(node) {
            let holders = graph.assigned_positions(&sup);
            for set in &ent.sets {
                if set
                    .positions
                    .iter()
                    .any(|p| holders.contains(&p.position_id))
                {
                    candidate_sets.insert(set.set_id.clone());
                }
            }
            necessary.extend(holders);
        }
    }

    let mut correlations = BTreeMap::new();
    for p in &necessary {
        let mut total = 0.0;
        for node in &analysis.related_node_ids {
            total += relevance(graph, p, node, opts.decay)?;
        }
        correlations.insert(p.clone(), total);
    }

    let mut ranked = Vec::new();
    let mut unscored = Vec::new();
    for p in &necessary {
        match scores.get(p) {
            Some(&total) => ranked.push(RankedPosition {
                position_id: p.clone(),
                total,
                relevance: correlations[p],
                index: correlations[p] * (1.0 - total / 100.0),
            }),
            None => unscored.push(p.clone()),
        }
    }
    ranked.sort_by(rank_order);

    let mut low: Vec<PositionScore> = ranked
        .iter()
        .filter(|r| r.total < opts.low_score_threshold)
        .map(|r| PositionScore {
            position_id: r.position_id.clone(),
            total: r.total,
        })
        .collect();
    low.sort_by(|a, b| {
        a.total
            .total_cmp(&b.total)
            .then_with(|| a.position_id.cmp(&b.position_id))
    });

    Ok(AccountabilityReport {
        incident_id: incident.incident_id.clone(),
        period,
        score_source,
        unbounded: analysis.unbounded,
        related_node_ids: analysis.related_node_ids,
        candidate_sets,
        necessary_positions: necessary,
        low_score_positions: low,
        correlations,
        ranked,
        unscored_positions: unscored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub position_id: PositionId,
    pub department_id: DepartmentId,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingSnapshot {
    pub period: Period,
    pub overall: Vec<RankEntry>,
    pub by_department: BTreeMap<DepartmentId, Vec<RankEntry>>,
}

pub fn build_rankings<'a>(
    period: Period,
    reports: impl IntoIterator<Item = &'a ScoreReport>,
) -> RankingSnapshot {
    let mut overall: Vec<RankEntry> = reports
        .into_iter()
        .map(|r| RankEntry {
            position_id: r.position_id.clone(),
            department_id: r.department_id.clone(),
            total: r.breakdown.total,
        })
        .collect();
    overall.sort_by(|a, b| {
        b.total
            .total_cmp(&a.total)
            .then_with(|| a.position_id.cmp(&b.position_id))
    });
    let mut by_department: BTreeMap<DepartmentId, Vec<RankEntry>> = BTreeMap::new();
    for e in &overall {
        by_department
            .entry(e.department_id.clone())
            .or_default()
            .push(e.clone());
    }
    RankingSnapshot {
        period,
        overall,
        by_department,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub period: Period,
    pub breakdown: ScoreBreakdown,
}

/// Closed-period breakdowns for `position`, oldest first. Periods without a
/// score are omitted.
pub fn score_series<'a>(
    position: &PositionId,
    closed: impl IntoIterator<Item = (&'a Period, &'a BTreeMap<PositionId, ScoreReport>)>,
    utc_offset_minutes: i32,
) -> Vec<SeriesPoint> {
    let mut out: Vec<SeriesPoint> = closed
        .into_iter()
        .filter_map(|(period, reports)| {
            reports.get(position).map(|r| SeriesPoint {
                period: *period,
                breakdown: r.breakdown.clone(),
            })
        })
        .collect();
    out.sort_by_key(|p| (p.period.bounds(utc_offset_minutes), p.period.to_string()));
    out
}

/// The notifications owed for a ranking: one per position below
/// `threshold` and one per affected department.
pub fn low_score_notifications(snapshot: &RankingSnapshot, threshold: f64) -> Vec<Notification> {
    let mut personal = Vec::new();
    let mut departments: BTreeMap<&DepartmentId, Vec<PositionId>> = BTreeMap::new();
    for e in snapshot.overall.iter().filter(|e| e.total < threshold) {
        personal.push(Notification::LowScore(LowScoreNotification {
            period: snapshot.period,
            position_id: e.position_id.clone(),
            total: e.total,
            threshold,
        }));
        departments
            .entry(&e.department_id)
            .or_default()
            .push(e.position_id.clone());
    }
    personal.extend(departments.into_iter().map(|(d, positions)| {
        Notification::Department(DepartmentNotification {
            period: snapshot.period,
            department_id: d.clone(),
            positions,
            threshold,
        })
    }));
    personal
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct NotifyOutcome {
    pub dispatched: Vec<Notification>,
    pub pending: Vec<Notification>,
}

/// Dispatches owed notifications whose key is not in `sent`, recording
/// each successful key. Everything after the first failure stays pending.
pub fn low_score_notify(
    snapshot: &RankingSnapshot,
    threshold: f64,
    notifier: &mut dyn Notifier,
    sent: &mut BTreeSet<String>,
) -> NotifyOutcome {
    let mut outcome = NotifyOutcome::default();
    for n in low_score_notifications(snapshot, threshold) {
        if sent.contains(&n.key()) {
            continue;
        }
        if outcome.pending.is_empty() && notifier.notify(&n).is_ok() {
            sent.insert(n.key());
            outcome.dispatched.push(n);
        } else {
            outcome.pending.push(n);
        }
    }
    outcome
}
