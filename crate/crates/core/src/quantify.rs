//! Risk-driven quantification: tune cycles and triggers from risk levels,
//! generate supervision lists, link nodes, build the DAG and loop on
//! performance until every position meets its threshold.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    build_graph, link_collected_node, DagExport, GraphError, LinkRecord, RelationGraph,
};
use crate::model::{
    validate_enterprise, CollectionMethod, Enterprise, EvaluationMethod, NodeId, PositionId,
    ResponsibilityCategory, ResponsibilityList, ResponsibilityNode, ResponsibilitySet, RiskLevel,
    TaskType, TriggerMethod, ValidationReport,
};

pub const DAY_SECS: u64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TriggerPolicy {
    Scheduled,
    Manual,
    /// Event-triggered on the category of the node's risk source.
    OnRiskCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTuningPolicy {
    pub cycle_by_level: BTreeMap<RiskLevel, u64>,
    pub trigger_by_level: BTreeMap<RiskLevel, TriggerPolicy>,
}

impl Default for RiskTuningPolicy {
    fn default() -> Self {
        use RiskLevel::*;
        Self {
            cycle_by_level: BTreeMap::from([
                (Critical, DAY_SECS),
                (High, 7 * DAY_SECS),
                (Medium, 30 * DAY_SECS),
                (Low, 90 * DAY_SECS),
            ]),
            trigger_by_level: BTreeMap::from([
                (Critical, TriggerPolicy::OnRiskCategory),
                (High, TriggerPolicy::OnRiskCategory),
                (Medium, TriggerPolicy::Scheduled),
                (Low, TriggerPolicy::Scheduled),
            ]),
        }
    }
}

impl RiskTuningPolicy {
    /// Cycle bounds must be present for every level and strictly decrease as
    /// the level rises.
    pub fn check(&self) -> Result<(), QuantifyError> {
        let mut prev: Option<u64> = None;
        for level in RiskLevel::ALL {
            let c = *self
                .cycle_by_level
                .get(&level)
                .ok_or_else(|| QuantifyError::InvalidPolicy(format!("no cycle for {level}")))?;
            if c == 0 || prev.is_some_and(|p| c >= p) {
                return Err(QuantifyError::InvalidPolicy(format!(
                    "cycle for {level} must be positive and shorter than the level below"
                )));
            }
            prev = Some(c);
        }
        Ok(())
    }

    /// Cycle bound for `level` after `steps` halvings, never below one day
    /// unless the base bound already is.
    pub fn cycle_bound(&self, level: RiskLevel, steps: u32) -> u64 {
        let base = self.cycle_by_level.get(&level).copied().unwrap_or(u64::MAX);
        let halved = base.checked_shr(steps).unwrap_or(0);
        halved.max(base.min(DAY_SECS))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceThreshold {
    pub min_score_by_level: BTreeMap<RiskLevel, f64>,
    pub max_iterations: u32,
}

impl Default for PerformanceThreshold {
    fn default() -> Self {
        use RiskLevel::*;
        Self {
            min_score_by_level: BTreeMap::from([
                (Low, 60.0),
                (Medium, 70.0),
                (High, 80.0),
                (Critical, 90.0),
            ]),
            max_iterations: 5,
        }
    }
}

impl PerformanceThreshold {
    pub fn min_score(&self, level: RiskLevel) -> f64 {
        self.min_score_by_level.get(&level).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantifyError {
    #[error("node {node} references undeclared risk {risk}")]
    UnknownRisk { node: NodeId, risk: String },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("configuration has {} violation(s)", .0.violations.len())]
    InvalidConfiguration(ValidationReport),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WarningKind {
    SelfSupervision,
    UnreferencedNode,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Warning {
    pub kind: WarningKind,
    pub subject: String,
    pub detail: String,
}

/// Change applied to one node by risk tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningChange {
    pub node_id: NodeId,
    pub position_id: PositionId,
    pub level: RiskLevel,
    pub cycle_before: Option<u64>,
    pub cycle_after: Option<u64>,
    pub trigger_before: TriggerMethod,
    pub trigger_after: TriggerMethod,
}

fn tune_set(
    set: &ResponsibilitySet,
    ent: &Enterprise,
    policy: &RiskTuningPolicy,
    tighten: &BTreeMap<PositionId, u32>,
    changes: &mut Vec<TuningChange>,
) -> Result<ResponsibilitySet, QuantifyError> {
    let mut out = set.clone();
    for node in &mut out.nodes {
        let Some(risk_id) = &node.risk_id else {
            continue;
        };
        let risk = ent
            .risk(risk_id)
            .ok_or_else(|| QuantifyError::UnknownRisk {
                node: node.node_id.clone(),
                risk: risk_id.to_string(),
            })?;
        let steps = tighten.get(&node.position_id).copied().unwrap_or(0);
        let cycle_before = node.cycle.min_cycle_secs;
        if node.cycle.is_periodic() {
            let bound = policy.cycle_bound(risk.level, steps);
            node.cycle.min_cycle_secs = node.cycle.min_cycle_secs.map(|c| c.min(bound));
        }
        let trigger_before = node.trigger.clone();
        node.trigger = match policy.trigger_by_level.get(&risk.level) {
            Some(TriggerPolicy::Scheduled) => TriggerMethod::scheduled(),
            Some(TriggerPolicy::Manual) => TriggerMethod::manual(),
            Some(TriggerPolicy::OnRiskCategory) => TriggerMethod::on_event(risk.category.clone()),
            None => node.trigger.clone(),
        };
        if cycle_before != node.cycle.min_cycle_secs || trigger_before != node.trigger {
            changes.push(TuningChange {
                node_id: node.node_id.clone(),
                position_id: node.position_id.clone(),
                level: risk.level,
                cycle_before,
                cycle_after: node.cycle.min_cycle_secs,
                trigger_before,
                trigger_after: node.trigger.clone(),
            });
        }
    }
    Ok(out)
}

/// Tightens cycle and trigger of every risk-bearing node of `set` per `policy`.
/// Cycles only ever shorten. Risks are resolved against `ent`.
pub fn apply_risk_tuning(
    set: &ResponsibilitySet,
    ent: &Enterprise,
    policy: &RiskTuningPolicy,
) -> Result<ResponsibilitySet, QuantifyError> {
    tune_set(set, ent, policy, &BTreeMap::new(), &mut Vec::new())
}

/// A generated supervision node with its single-item list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSupervision {
    pub node: ResponsibilityNode,
    pub list: ResponsibilityList,
    pub supervised: Vec<NodeId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SupervisionPlan {
    pub generated: Vec<GeneratedSupervision>,
    pub warnings: Vec<Warning>,
}

pub fn supervision_node_id(list: &ResponsibilityList) -> NodeId {
    NodeId::new(format!("sup-{}", list.list_id))
}

/// For every list of `set` holding an unsupervised HIGH or CRITICAL node,
/// creates one SUPERVISION node assigned to the list position's superior, or
/// to the position itself (with a warning) when it has none.
pub fn generate_supervision_lists(set: &ResponsibilitySet, ent: &Enterprise) -> SupervisionPlan {
    let mut plan = SupervisionPlan::default();
    for list in &set.lists {
        let high: Vec<&ResponsibilityNode> = list
            .items
            .iter()
            .filter_map(|id| set.node(id))
            .filter(|n| {
                n.category != ResponsibilityCategory::Supervision && n.supervised_by.is_none()
            })
            .filter(|n| ent.node_risk_level(n).is_some_and(RiskLevel::is_high))
            .collect();
        if high.is_empty() {
            continue;
        }
        let superior = ent
            .position(&list.position_id)
            .and_then(|p| p.superior.clone());
        let supervisor = superior.clone().unwrap_or_else(|| list.position_id.clone());
        if superior.is_none() {
            plan.warnings.push(Warning {
                kind: WarningKind::SelfSupervision,
                subject: list.position_id.to_string(),
                detail: format!(
                    "list {} has no superior position; supervision assigned to the holder",
                    list.list_id
                ),
            });
        }
        let riskiest = high
            .iter()
            .max_by_key(|n| (ent.node_risk_level(n), std::cmp::Reverse(n.node_id.clone())))
            .expect("nonempty");
        let tightest = high
            .iter()
            .filter(|n| n.cycle.is_periodic())
            .min_by_key(|n| (n.cycle.min_cycle_secs, n.node_id.clone()))
            .map(|n| n.cycle.clone())
            .unwrap_or_else(|| riskiest.cycle.clone());
        let weight = high.iter().map(|n| n.weight).fold(f64::MIN, f64::max);
        let node_id = supervision_node_id(list);
        let node = ResponsibilityNode {
            node_id: node_id.clone(),
            title: format!("Supervise {}", list.list_id),
            position_id: supervisor.clone(),
            category: ResponsibilityCategory::Supervision,
            task_type: TaskType::Secondary,
            mandatory: list.mandatory,
            cycle: tightest,
            trigger: TriggerMethod::scheduled(),
            evaluation: EvaluationMethod::Evaluation,
            weight,
            risk_id: riskiest.risk_id.clone(),
            boundary_id: riskiest.boundary_id.clone(),
            collection: CollectionMethod::Manual,
            supervised_by: None,
            alarm_handling: false,
            response_budget_secs: None,
            consensus: None,
        };
        plan.generated.push(GeneratedSupervision {
            list: ResponsibilityList {
                list_id: format!("sup-{}", list.list_id).into(),
                position_id: supervisor,
                items: vec![node_id.clone()],
                mandatory: list.mandatory,
                reporting_period: list.reporting_period,
            },
            node,
            supervised: high.iter().map(|n| n.node_id.clone()).collect(),
        });
    }
    plan
}

/// Inserts generated supervision nodes and lists into the sets holding the
/// supervisor positions and stamps `supervised_by` on supervised nodes.
pub fn apply_supervision(ent: &mut Enterprise, plan: &SupervisionPlan) {
    let mut supervised_by: BTreeMap<&NodeId, &NodeId> = BTreeMap::new();
    for g in &plan.generated {
        for n in &g.supervised {
            supervised_by.insert(n, &g.node.node_id);
        }
    }
    for set in &mut ent.sets {
        for node in &mut set.nodes {
            if let Some(s) = supervised_by.get(&node.node_id) {
                node.supervised_by = Some((*s).clone());
            }
        }
    }
    for g in &plan.generated {
        let target = ent.sets.iter_mut().find(|s| {
            s.positions
                .iter()
                .any(|p| p.position_id == g.node.position_id)
        });
        if let Some(set) = target {
            set.nodes.push(g.node.clone());
            set.lists.push(g.list.clone());
        }
    }
}

/// Period scores per position, consulted on every performance check.
pub trait ScoreSource {
    fn period_scores(&mut self, plan: &Enterprise, iteration: u32) -> BTreeMap<PositionId, f64>;
}

impl ScoreSource for BTreeMap<PositionId, f64> {
    fn period_scores(&mut self, _: &Enterprise, _: u32) -> BTreeMap<PositionId, f64> {
        self.clone()
    }
}

impl<F> ScoreSource for F
where
    F: FnMut(&Enterprise, u32) -> BTreeMap<PositionId, f64>,
{
    fn period_scores(&mut self, plan: &Enterprise, iteration: u32) -> BTreeMap<PositionId, f64> {
        self(plan, iteration)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortfallRecord {
    pub position_id: PositionId,
    pub level: RiskLevel,
    pub score: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub shortfalls: Vec<ShortfallRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QuantifyOutcome {
    Converged,
    NonConvergence,
}

/// Quantification report document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantificationReport {
    pub outcome: QuantifyOutcome,
    pub iterations: Vec<IterationRecord>,
    pub warnings: Vec<Warning>,
    pub tuning: Vec<TuningChange>,
    /// Halving steps applied per position by the performance loop.
    pub tightened: BTreeMap<PositionId, u32>,
    pub collection: BTreeMap<NodeId, CollectionMethod>,
    pub links: Vec<LinkRecord>,
}

#[derive(Debug, Clone)]
pub struct QuantifiedPlan {
    /// Tuned configuration including generated supervision.
    pub enterprise: Enterprise,
    pub graph: RelationGraph,
    pub dag: DagExport,
    pub supervision_nodes: Vec<ResponsibilityNode>,
    pub iteration_count: u32,
    pub performance_ok: bool,
    pub report: QuantificationReport,
}

/// Highest risk level a position carries, through its own risks or its nodes.
pub fn position_risk_level(ent: &Enterprise, position: &PositionId) -> Option<RiskLevel> {
    let own = ent
        .position(position)
        .into_iter()
        .flat_map(|p| p.risk_ids.iter())
        .filter_map(|r| ent.risk(r))
        .map(|r| r.level);
    let from_nodes = ent
        .nodes()
        .filter(|n| &n.position_id == position)
        .filter_map(|n| ent.node_risk_level(n));
    own.chain(from_nodes).max()
}

struct Built {
    enterprise: Enterprise,
    graph: RelationGraph,
    dag: DagExport,
    supervision: SupervisionPlan,
    tuning: Vec<TuningChange>,
    links: Vec<LinkRecord>,
}

/// Tuning, supervision, collection, linking and DAG generation for one pass.
fn build_pass(
    ent: &Enterprise,
    policy: &RiskTuningPolicy,
    tighten: &BTreeMap<PositionId, u32>,
) -> Result<Built, QuantifyError> {
    let mut tuning = Vec::new();
    let mut tuned = ent.clone();
    tuned.sets = ent
        .sets
        .iter()
        .map(|s| tune_set(s, ent, policy, tighten, &mut tuning))
        .collect::<Result<_, _>>()?;

    let mut supervision = SupervisionPlan::default();
    for set in &tuned.sets {
        let p = generate_supervision_lists(set, &tuned);
        supervision.generated.extend(p.generated);
        supervision.warnings.extend(p.warnings);
    }
    apply_supervision(&mut tuned, &supervision);

    let report = validate_enterprise(&tuned);
    if !report.is_valid() {
        return Err(QuantifyError::InvalidConfiguration(report));
    }

    let graph = build_graph(&tuned.sets)?;
    let lists: Vec<&ResponsibilityList> = tuned.lists().collect();
    let links = tuned
        .nodes()
        .map(|n| {
            link_collected_node(
                &graph,
                &n.node_id,
                n.collection == CollectionMethod::Iot,
                lists.iter().copied(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let dag = graph.export()?;
    Ok(Built {
        enterprise: tuned,
        graph,
        dag,
        supervision,
        tuning,
        links,
    })
}

/// Runs the full workflow, looping on the performance check at most
/// `threshold.max_iterations` times. Non-convergence is reported in the plan,
/// not as an error.
pub fn run_quantification(
    ent: &Enterprise,
    policy: &RiskTuningPolicy,
    threshold: &PerformanceThreshold,
    scores: &mut dyn ScoreSource,
) -> Result<QuantifiedPlan, QuantifyError> {
    policy.check()?;
    if threshold.max_iterations == 0 {
        return Err(QuantifyError::InvalidPolicy(
            "max_iterations must be at least 1".into(),
        ));
    }
    let report = validate_enterprise(ent);
    if !report.is_valid() {
        return Err(QuantifyError::InvalidConfiguration(report));
    }

    let mut tighten: BTreeMap<PositionId, u32> = BTreeMap::new();
    let mut iterations = Vec::new();
    let mut iteration = 0;
    loop {
        iteration += 1;
        let built = build_pass(ent, policy, &tighten)?;
        let period_scores = scores.period_scores(&built.enterprise, iteration);
        let mut shortfalls = Vec::new();
        for (position, score) in &period_scores {
            if built.enterprise.position(position).is_none() {
                continue;
            }
            let level = position_risk_level(&built.enterprise, position).unwrap_or(RiskLevel::Low);
            let min = threshold.min_score(level);
            if *score < min {
                shortfalls.push(ShortfallRecord {
                    position_id: position.clone(),
                    level,
                    score: *score,
                    threshold: min,
                });
            }
        }
        let ok = shortfalls.is_empty();
        iterations.push(IterationRecord {
            iteration,
            shortfalls: shortfalls.clone(),
        });
        if ok || iteration >= threshold.max_iterations {
            let mut warnings = built.supervision.warnings.clone();
            for l in &built.links {
                if let Some(w) = &l.warning {
                    warnings.push(Warning {
                        kind: WarningKind::UnreferencedNode,
                        subject: l.node_id.to_string(),
                        detail: w.clone(),
                    });
                }
            }
            let collection = built
                .enterprise
                .nodes()
                .map(|n| (n.node_id.clone(), n.collection))
                .collect();
            return Ok(QuantifiedPlan {
                supervision_nodes: built
                    .supervision
                    .generated
                    .iter()
                    .map(|g| g.node.clone())
                    .collect(),
                report: QuantificationReport {
                    outcome: if ok {
                        QuantifyOutcome::Converged
                    } else {
                        QuantifyOutcome::NonConvergence
                    },
                    iterations,
                    warnings,
                    tuning: built.tuning,
                    tightened: tighten,
                    collection,
                    links: built.links,
                },
                enterprise: built.enterprise,
                graph: built.graph,
                dag: built.dag,
                iteration_count: iteration,
                performance_ok: ok,
            });
        }
        for s in shortfalls {
            *tighten.entry(s.position_id).or_default() += 1;
        }
    }
}

/// Single pass without a performance loop: the effective configuration the
/// engine runs against.
pub fn effective_configuration(
    ent: &Enterprise,
    policy: &RiskTuningPolicy,
) -> Result<QuantifiedPlan, QuantifyError> {
    let threshold = PerformanceThreshold {
        max_iterations: 1,
        ..PerformanceThreshold::default()
    };
    run_quantification(ent, policy, &threshold, &mut BTreeMap::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::assert_acyclic;
    use crate::model::test_support::*;
    use crate::model::{CycleSpec, RiskSource, TriggerKind};

    fn risk(id: &str, level: RiskLevel, cat: &str) -> RiskSource {
        RiskSource {
            risk_id: id.into(),
            description: id.to_owned(),
            level,
            category: cat.into(),
        }
    }

    /// Two positions: `boss` over `worker`, one list each.
    fn fixture(worker_level: Option<RiskLevel>, cycle_days: u64) -> Enterprise {
        let mut set = ResponsibilitySet::empty("s", "ops");
        set.boundaries
            .push(boundary("b", &["fire", "crowd"], &["fire"]));
        set.positions.push(position("boss", "ops", None));
        set.positions.push(position("worker", "ops", Some("boss")));
        set.positions[0].subordinates.insert("worker".into());
        let mut w = node("w1", "worker", "b", 2.0);
        w.cycle = CycleSpec::periodic(cycle_days * DAY_SECS, anchor());
        w.risk_id = worker_level.map(|_| "r".into());
        set.nodes.push(w);
        set.nodes.push(node("w2", "worker", "b", 1.0));
        set.nodes.push(node("b1", "boss", "b", 1.0));
        set.lists.push(list("lw", "worker", &["w1", "w2"]));
        set.lists.push(list("lb", "boss", &["b1"]));
        Enterprise {
            enterprise_id: "e".into(),
            name: "E".into(),
            utc_offset_minutes: 0,
            risks: worker_level
                .map(|l| vec![risk("r", l, "fire")])
                .unwrap_or_default(),
            sets: vec![set],
        }
    }

    #[test]
    fn default_policy_is_strictly_decreasing() {
        RiskTuningPolicy::default().check().unwrap();
        let mut bad = RiskTuningPolicy::default();
        bad.cycle_by_level.insert(RiskLevel::High, 100 * DAY_SECS);
        assert!(bad.check().is_err());
    }

    #[test]
    fn node_without_risk_is_unchanged() {
        let ent = fixture(None, 30);
        let tuned = apply_risk_tuning(&ent.sets[0], &ent, &RiskTuningPolicy::default()).unwrap();
        assert_eq!(tuned, ent.sets[0]);
    }

    #[test]
    fn critical_node_is_tightened_and_event_triggered() {
        let ent = fixture(Some(RiskLevel::Critical), 30);
        let tuned = apply_risk_tuning(&ent.sets[0], &ent, &RiskTuningPolicy::default()).unwrap();
        let w = tuned.node(&"w1".into()).unwrap();
        assert_eq!(w.cycle.min_cycle_secs, Some(DAY_SECS));
        assert_eq!(w.trigger, TriggerMethod::on_event("fire"));
    }

    #[test]
    fn low_node_keeps_shorter_cycle() {
        let ent = fixture(Some(RiskLevel::Low), 7);
        let tuned = apply_risk_tuning(&ent.sets[0], &ent, &RiskTuningPolicy::default()).unwrap();
        let w = tuned.node(&"w1".into()).unwrap();
        assert_eq!(w.cycle.min_cycle_secs, Some(7 * DAY_SECS));
        assert_eq!(w.trigger.kind, TriggerKind::Scheduled);
    }

    #[test]
    fn undeclared_risk_is_an_error() {
        let mut ent = fixture(Some(RiskLevel::High), 7);
        ent.risks.clear();
        assert!(matches!(
            apply_risk_tuning(&ent.sets[0], &ent, &RiskTuningPolicy::default()),
            Err(QuantifyError::UnknownRisk { .. })
        ));
    }

    #[test]
    fn tuning_is_idempotent() {
        for level in RiskLevel::ALL {
            let ent = fixture(Some(level), 45);
            let p = RiskTuningPolicy::default();
            let once = apply_risk_tuning(&ent.sets[0], &ent, &p).unwrap();
            let twice = apply_risk_tuning(&once, &ent, &p).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn low_and_medium_lists_get_no_supervision() {
        for level in [RiskLevel::Low, RiskLevel::Medium] {
            let ent = fixture(Some(level), 7);
            assert!(generate_supervision_lists(&ent.sets[0], &ent)
                .generated
                .is_empty());
        }
    }

    #[test]
    fn high_node_is_supervised_by_superior() {
        let ent = fixture(Some(RiskLevel::High), 7);
        let plan = generate_supervision_lists(&ent.sets[0], &ent);
        assert_eq!(plan.generated.len(), 1);
        assert!(plan.warnings.is_empty());
        let g = &plan.generated[0];
        assert_eq!(g.node.position_id, PositionId::from("boss"));
        assert_eq!(g.node.category, ResponsibilityCategory::Supervision);
        assert_eq!(g.node.weight, 2.0);
        assert_eq!(g.node.cycle.min_cycle_secs, Some(7 * DAY_SECS));
        assert_eq!(g.supervised, vec![NodeId::from("w1")]);
        assert_eq!(g.list.list_id.as_str(), "sup-lw");
        assert_eq!(g.list.items, vec![g.node.node_id.clone()]);
    }

    #[test]
    fn apex_position_supervises_itself_with_warning() {
        let mut ent = fixture(Some(RiskLevel::Critical), 7);
        ent.sets[0].nodes[2].risk_id = Some("r".into());
        let plan = generate_supervision_lists(&ent.sets[0], &ent);
        let own: Vec<_> = plan
            .generated
            .iter()
            .filter(|g| {
                g.node.position_id.as_str() == "boss" && g.list.list_id.as_str() == "sup-lb"
            })
            .collect();
        assert_eq!(own.len(), 1);
        assert_eq!(plan.warnings.len(), 1);
        assert_eq!(plan.warnings[0].kind, WarningKind::SelfSupervision);
    }

    #[test]
    fn supervision_is_not_regenerated() {
        let mut ent = fixture(Some(RiskLevel::High), 7);
        let plan = generate_supervision_lists(&ent.sets[0], &ent);
        apply_supervision(&mut ent, &plan);
        assert!(generate_supervision_lists(&ent.sets[0], &ent)
            .generated
            .is_empty());
        assert!(validate_enterprise(&ent).is_valid());
    }

    fn scores(v: f64) -> BTreeMap<PositionId, f64> {
        BTreeMap::from([("worker".into(), v), ("boss".into(), v)])
    }

    #[test]
    fn all_perfect_scores_converge_in_one_iteration() {
        let ent = fixture(Some(RiskLevel::High), 7);
        let plan = run_quantification(
            &ent,
            &RiskTuningPolicy::default(),
            &PerformanceThreshold::default(),
            &mut scores(100.0),
        )
        .unwrap();
        assert_eq!(plan.iteration_count, 1);
        assert!(plan.performance_ok);
        assert_eq!(plan.report.outcome, QuantifyOutcome::Converged);
        assert!(assert_acyclic(&plan.graph).is_ok());
        assert_eq!(plan.supervision_nodes.len(), 1);
    }

    #[test]
    fn shortfall_halves_cycle_before_recheck() {
        // single HIGH position at 50 (< 80); recovers once the cycle tightens
        let ent = fixture(Some(RiskLevel::High), 7);
        let mut seen_cycles = Vec::new();
        let mut source = |plan: &Enterprise, _it: u32| {
            let c = plan
                .node(&"w1".into())
                .unwrap()
                .cycle
                .min_cycle_secs
                .unwrap();
            seen_cycles.push(c);
            let s = if c < 7 * DAY_SECS { 95.0 } else { 50.0 };
            BTreeMap::from([(PositionId::from("worker"), s)])
        };
        let plan = run_quantification(
            &ent,
            &RiskTuningPolicy::default(),
            &PerformanceThreshold::default(),
            &mut source,
        )
        .unwrap();
        assert_eq!(plan.iteration_count, 2);
        assert!(plan.performance_ok);
        assert_eq!(seen_cycles, vec![7 * DAY_SECS, 7 * DAY_SECS / 2]);
        assert_eq!(plan.report.iterations[0].shortfalls[0].threshold, 80.0);
    }

    #[test]
    fn persistent_zero_hits_non_convergence() {
        let ent = fixture(Some(RiskLevel::High), 7);
        let plan = run_quantification(
            &ent,
            &RiskTuningPolicy::default(),
            &PerformanceThreshold::default(),
            &mut scores(0.0),
        )
        .unwrap();
        assert_eq!(plan.iteration_count, 5);
        assert!(!plan.performance_ok);
        assert_eq!(plan.report.outcome, QuantifyOutcome::NonConvergence);
        // 7d -> 3.5d -> 1.75d -> floor at 1d
        let w = plan.enterprise.node(&"w1".into()).unwrap();
        assert_eq!(w.cycle.min_cycle_secs, Some(DAY_SECS));
    }

    #[test]
    fn invalid_configuration_is_rejected() {
        let mut ent = fixture(None, 7);
        ent.sets[0].nodes[0].weight = 0.0;
        assert!(matches!(
            effective_configuration(&ent, &RiskTuningPolicy::default()),
            Err(QuantifyError::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn cycle_bound_floor() {
        let p = RiskTuningPolicy::default();
        assert_eq!(p.cycle_bound(RiskLevel::High, 0), 7 * DAY_SECS);
        assert_eq!(p.cycle_bound(RiskLevel::High, 1), 7 * DAY_SECS / 2);
        assert_eq!(p.cycle_bound(RiskLevel::High, 10), DAY_SECS);
        assert_eq!(p.cycle_bound(RiskLevel::Critical, 3), DAY_SECS);
    }
}
