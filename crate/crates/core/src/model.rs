//! Domain types for responsibilities, positions and accountability boundaries.
//!
//! Everything here is plain data. Values are immutable once a configuration
//! version is built; changes go through a new [`Enterprise`] document.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

macro_rules! id_type {
    ($($(#[$meta:meta])* $name:ident),* $(,)?) => {$(
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    )*};
}

id_type!(
    RiskId,
    BoundaryId,
    NodeId,
    PositionId,
    ListId,
    SetId,
    DepartmentId,
    /// Event-category tag, e.g. `fire` or `electrical`.
    Category,
);

/// Ordered risk severity. The integer rank is 1 for `Low` up to 4 for `Critical`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RiskLevel {
    Low = 1,
    Medium = 2,
    High = 3,
    Critical = 4,
}

impl RiskLevel {
    pub const ALL: [RiskLevel; 4] = [
        RiskLevel::Low,
        RiskLevel::Medium,
        RiskLevel::High,
        RiskLevel::Critical,
    ];

    pub fn rank(self) -> u8 {
        self as u8
    }

    pub fn from_rank(rank: u8) -> Option<Self> {
        match rank {
            1 => Some(RiskLevel::Low),
            2 => Some(RiskLevel::Medium),
            3 => Some(RiskLevel::High),
            4 => Some(RiskLevel::Critical),
            _ => None,
        }
    }

    /// One step up, saturating at `Critical`.
    pub fn raised(self) -> Self {
        Self::from_rank(self.rank() + 1).unwrap_or(RiskLevel::Critical)
    }

    pub fn is_high(self) -> bool {
        self >= RiskLevel::High
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RiskLevel::Low => "LOW",
            RiskLevel::Medium => "MEDIUM",
            RiskLevel::High => "HIGH",
            RiskLevel::Critical => "CRITICAL",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskSource {
    pub risk_id: RiskId,
    pub description: String,
    pub level: RiskLevel,
    pub category: Category,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResponsibilityCategory {
    Subject,
    Supervision,
    Leadership,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponsibilityBoundary {
    pub boundary_id: BoundaryId,
    /// Citation of the legal or safety rule the boundary comes from. Opaque.
    pub source_rule: String,
    /// Categories the holder is accountable for.
    pub upper_bound: BTreeSet<Category>,
    /// Categories the holder is minimally accountable for.
    pub lower_bound: BTreeSet<Category>,
    #[serde(default)]
    pub classify_rules: BTreeMap<Category, ResponsibilityCategory>,
    #[serde(default)]
    pub relative_cases: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CycleKind {
    Aperiodic,
    Periodic,
}

/// Task cycle. `min_cycle_secs` and `anchor` are present iff periodic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleSpec {
    pub kind: CycleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_cycle_secs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<DateTime<Utc>>,
}

impl CycleSpec {
    pub fn aperiodic() -> Self {
        Self {
            kind: CycleKind::Aperiodic,
            min_cycle_secs: None,
            anchor: None,
        }
    }

    pub fn periodic(min_cycle_secs: u64, anchor: DateTime<Utc>) -> Self {
        Self {
            kind: CycleKind::Periodic,
            min_cycle_secs: Some(min_cycle_secs),
            anchor: Some(anchor),
        }
    }

    pub fn is_periodic(&self) -> bool {
        self.kind == CycleKind::Periodic
    }

    /// Cycle window `[start, end)` containing `at`, for periodic cycles.
    pub fn window_at(&self, at: DateTime<Utc>) -> Option<(DateTime<Utc>, DateTime<Utc>)> {
        let (secs, anchor) = (self.min_cycle_secs?, self.anchor?);
        if secs == 0 {
            return None;
        }
        let secs = secs as i64;
        let offset = (at - anchor).num_seconds();
        let k = offset.div_euclid(secs);
        let start = anchor + chrono::Duration::seconds(k * secs);
        Some((start, start + chrono::Duration::seconds(secs)))
    }

    /// All cycle windows whose start lies in `[from, to)`.
    pub fn windows_starting_in(
        &self,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Vec<(DateTime<Utc>, DateTime<Utc>)> {
        let Some((mut start, _)) = self.window_at(from) else {
            return Vec::new();
        };
        let step = chrono::Duration::seconds(self.min_cycle_secs.unwrap_or(0) as i64);
        if start < from {
            start += step;
        }
        let mut out = Vec::new();
        while start < to {
            out.push((start, start + step));
            start += step;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TriggerKind {
    Scheduled,
    EventTriggered,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerMethod {
    pub kind: TriggerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_category: Option<Category>,
}

impl TriggerMethod {
    pub fn scheduled() -> Self {
        Self {
            kind: TriggerKind::Scheduled,
            event_category: None,
        }
    }

    pub fn manual() -> Self {
        Self {
            kind: TriggerKind::Manual,
            event_category: None,
        }
    }

    pub fn on_event(category: impl Into<Category>) -> Self {
        Self {
            kind: TriggerKind::EventTriggered,
            event_category: Some(category.into()),
        }
    }

    pub fn fires_on(&self, category: &Category) -> bool {
        self.kind == TriggerKind::EventTriggered && self.event_category.as_ref() == Some(category)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EvaluationMethod {
    Automatic,
    Evaluation,
    Voting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskType {
    Primary,
    Secondary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CollectionMethod {
    Iot,
    Manual,
}

pub const DEFAULT_RESPONSE_BUDGET_SECS: u64 = 600;

/// One task item owed by a position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsibilityNode {
    pub node_id: NodeId,
    pub title: String,
    pub position_id: PositionId,
    pub category: ResponsibilityCategory,
    pub task_type: TaskType,
    pub mandatory: bool,
    pub cycle: CycleSpec,
    pub trigger: TriggerMethod,
    pub evaluation: EvaluationMethod,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk_id: Option<RiskId>,
    pub boundary_id: BoundaryId,
    pub collection: CollectionMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supervised_by: Option<NodeId>,
    /// Marks the node that absorbs alarm-handling fulfillment for its trigger category.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub alarm_handling: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_budget_secs: Option<u64>,
    /// Free-text consensus note. Stored, never interpreted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus: Option<String>,
}

impl ResponsibilityNode {
    pub fn response_budget_secs(&self) -> u64 {
        self.response_budget_secs
            .unwrap_or(DEFAULT_RESPONSE_BUDGET_SECS)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Position {
    pub position_id: PositionId,
    pub title: String,
    pub department_id: DepartmentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superior: Option<PositionId>,
    #[serde(default)]
    pub subordinates: BTreeSet<PositionId>,
    #[serde(default)]
    pub risk_ids: BTreeSet<RiskId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReportingPeriod {
    Weekly,
    Monthly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponsibilityList {
    pub list_id: ListId,
    pub position_id: PositionId,
    pub items: Vec<NodeId>,
    pub mandatory: bool,
    pub reporting_period: ReportingPeriod,
}

/// Per-department responsibility data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsibilitySet {
    pub set_id: SetId,
    pub department_id: DepartmentId,
    #[serde(default)]
    pub positions: Vec<Position>,
    #[serde(default)]
    pub lists: Vec<ResponsibilityList>,
    #[serde(default)]
    pub boundaries: Vec<ResponsibilityBoundary>,
    #[serde(default)]
    pub nodes: Vec<ResponsibilityNode>,
}

impl ResponsibilitySet {
    pub fn empty(set_id: impl Into<SetId>, department_id: impl Into<DepartmentId>) -> Self {
        Self {
            set_id: set_id.into(),
            department_id: department_id.into(),
            positions: Vec::new(),
            lists: Vec::new(),
            boundaries: Vec::new(),
            nodes: Vec::new(),
        }
    }

    pub fn node(&self, id: &NodeId) -> Option<&ResponsibilityNode> {
        self.nodes.iter().find(|n| &n.node_id == id)
    }

    pub fn position(&self, id: &PositionId) -> Option<&Position> {
        self.positions.iter().find(|p| &p.position_id == id)
    }
}

/// Whole enterprise configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enterprise {
    pub enterprise_id: String,
    pub name: String,
    /// Enterprise-local offset from UTC, used for period boundaries.
    #[serde(default)]
    pub utc_offset_minutes: i32,
    #[serde(default)]
    pub risks: Vec<RiskSource>,
    #[serde(default)]
    pub sets: Vec<ResponsibilitySet>,
}

impl Enterprise {
    pub fn risk(&self, id: &RiskId) -> Option<&RiskSource> {
        self.risks.iter().find(|r| &r.risk_id == id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ResponsibilityNode> {
        self.sets.iter().flat_map(|s| s.nodes.iter())
    }

    pub fn positions(&self) -> impl Iterator<Item = &Position> {
        self.sets.iter().flat_map(|s| s.positions.iter())
    }

    pub fn lists(&self) -> impl Iterator<Item = &ResponsibilityList> {
        self.sets.iter().flat_map(|s| s.lists.iter())
    }

    pub fn boundaries(&self) -> impl Iterator<Item = &ResponsibilityBoundary> {
        self.sets.iter().flat_map(|s| s.boundaries.iter())
    }

    pub fn node(&self, id: &NodeId) -> Option<&ResponsibilityNode> {
        self.nodes().find(|n| &n.node_id == id)
    }

    pub fn position(&self, id: &PositionId) -> Option<&Position> {
        self.positions().find(|p| &p.position_id == id)
    }

    pub fn boundary(&self, id: &BoundaryId) -> Option<&ResponsibilityBoundary> {
        self.boundaries().find(|b| &b.boundary_id == id)
    }

    /// Risk level of a node, `None` when it carries no risk reference.
    pub fn node_risk_level(&self, node: &ResponsibilityNode) -> Option<RiskLevel> {
        node.risk_id
            .as_ref()
            .and_then(|r| self.risk(r))
            .map(|r| r.level)
    }

    pub fn node_risk_category(&self, node: &ResponsibilityNode) -> Option<&Category> {
        node.risk_id
            .as_ref()
            .and_then(|r| self.risk(r))
            .map(|r| &r.category)
    }

    /// Shared registry for validating `set` against the rest of the enterprise.
    pub fn registry_for(&self, set: &ResponsibilitySet) -> SharedRegistry {
        let mut reg = SharedRegistry {
            risks: self.risks.iter().map(|r| r.risk_id.clone()).collect(),
            ..SharedRegistry::default()
        };
        for other in self.sets.iter().filter(|s| s.set_id != set.set_id) {
            for p in &other.positions {
                reg.positions
                    .insert(p.position_id.clone(), p.superior.clone());
            }
            for b in &other.boundaries {
                reg.boundaries.insert(b.boundary_id.clone());
            }
            for n in &other.nodes {
                reg.nodes.insert(n.node_id.clone(), n.category);
            }
        }
        reg
    }
}

/// Identifiers declared outside a set that its cross-references may resolve to.
#[derive(Debug, Clone, Default)]
pub struct SharedRegistry {
    pub risks: BTreeSet<RiskId>,
    /// External positions and their superiors.
    pub positions: BTreeMap<PositionId, Option<PositionId>>,
    pub boundaries: BTreeSet<BoundaryId>,
    pub nodes: BTreeMap<NodeId, ResponsibilityCategory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    DuplicateId,
    DanglingReference,
    LowerExceedsUpper,
    RuleOutsideUpper,
    InvalidCycle,
    InvalidTrigger,
    NonPositiveWeight,
    SupervisionSupervised,
    SupervisorNotSupervision,
    HierarchyCycle,
    SubordinateMismatch,
    DepartmentMismatch,
    EmptyList,
    ListPositionMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    /// Offending identifier.
    pub subject: String,
    pub detail: String,
}

impl Violation {
    fn new(code: ViolationCode, subject: impl fmt::Display, detail: impl Into<String>) -> Self {
        Self {
            code,
            subject: subject.to_string(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} [{}]: {}", self.code, self.subject, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

fn check_duplicates<'a, T: fmt::Display + Ord + 'a>(
    kind: &str,
    ids: impl Iterator<Item = &'a T>,
    out: &mut Vec<Violation>,
) {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            out.push(Violation::new(
                ViolationCode::DuplicateId,
                id,
                format!("duplicate {kind} id"),
            ));
        }
    }
}

/// Checks every structural invariant of a set. Violations are data; an empty
/// report means the set is valid.
pub fn validate_set(set: &ResponsibilitySet, shared: &SharedRegistry) -> ValidationReport {
    use ViolationCode::*;
    let mut out = Vec::new();

    check_duplicates(
        "position",
        set.positions.iter().map(|p| &p.position_id),
        &mut out,
    );
    check_duplicates("node", set.nodes.iter().map(|n| &n.node_id), &mut out);
    check_duplicates("list", set.lists.iter().map(|l| &l.list_id), &mut out);
    check_duplicates(
        "boundary",
        set.boundaries.iter().map(|b| &b.boundary_id),
        &mut out,
    );

    let local_positions: BTreeMap<&PositionId, &Position> =
        set.positions.iter().map(|p| (&p.position_id, p)).collect();
    let local_nodes: BTreeMap<&NodeId, &ResponsibilityNode> =
        set.nodes.iter().map(|n| (&n.node_id, n)).collect();
    let boundary_known = |id: &BoundaryId| {
        set.boundaries.iter().any(|b| &b.boundary_id == id) || shared.boundaries.contains(id)
    };
    let position_known =
        |id: &PositionId| local_positions.contains_key(id) || shared.positions.contains_key(id);
    let node_category = |id: &NodeId| {
        local_nodes
            .get(id)
            .map(|n| n.category)
            .or_else(|| shared.nodes.get(id).copied())
    };

    for b in &set.boundaries {
        if !b.lower_bound.is_subset(&b.upper_bound) {
            let extra: Vec<_> = b
                .lower_bound
                .difference(&b.upper_bound)
                .map(|c| c.as_str())
                .collect();
            out.push(Violation::new(
                LowerExceedsUpper,
                &b.boundary_id,
                format!(
                    "lower bound categories not in upper bound: {}",
                    extra.join(", ")
                ),
            ));
        }
        for key in b.classify_rules.keys() {
            if !b.upper_bound.contains(key) {
                out.push(Violation::new(
                    RuleOutsideUpper,
                    &b.boundary_id,
                    format!("classify rule for '{key}' outside upper bound"),
                ));
            }
        }
    }

    for p in &set.positions {
        if p.department_id != set.department_id {
            out.push(Violation::new(
                DepartmentMismatch,
                &p.position_id,
                format!(
                    "position in department {} inside set for {}",
                    p.department_id, set.department_id
                ),
            ));
        }
        if let Some(sup) = &p.superior {
            if !position_known(sup) {
                out.push(Violation::new(
                    DanglingReference,
                    &p.position_id,
                    format!("unknown superior position {sup}"),
                ));
            }
        }
        for sub in &p.subordinates {
            let sub_superior = local_positions
                .get(sub)
                .map(|s| s.superior.clone())
                .or_else(|| shared.positions.get(sub).cloned());
            match sub_superior {
                None => out.push(Violation::new(
                    DanglingReference,
                    &p.position_id,
                    format!("unknown subordinate position {sub}"),
                )),
                Some(s) if s.as_ref() != Some(&p.position_id) => out.push(Violation::new(
                    SubordinateMismatch,
                    &p.position_id,
                    format!(
                        "subordinate {sub} does not name {} as superior",
                        p.position_id
                    ),
                )),
                Some(_) => {}
            }
        }
        for r in &p.risk_ids {
            if !shared.risks.contains(r) {
                out.push(Violation::new(
                    DanglingReference,
                    &p.position_id,
                    format!("unknown risk {r}"),
                ));
            }
        }
    }

    // Superior chains, following external positions too.
    let superior_of = |id: &PositionId| -> Option<PositionId> {
        local_positions
            .get(id)
            .and_then(|p| p.superior.clone())
            .or_else(|| shared.positions.get(id).cloned().flatten())
    };
    let mut reported: BTreeSet<Vec<PositionId>> = BTreeSet::new();
    for p in &set.positions {
        let mut path: Vec<PositionId> = vec![p.position_id.clone()];
        let mut cur = p.position_id.clone();
        while let Some(next) = superior_of(&cur) {
            if let Some(at) = path.iter().position(|x| x == &next) {
                let mut cycle = path[at..].to_vec();
                // rotate so the smallest id leads; keeps one report per cycle
                let min_idx = cycle
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.cmp(b.1))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                cycle.rotate_left(min_idx);
                if reported.insert(cycle.clone()) {
                    let mut names: Vec<_> = cycle.iter().map(|c| c.as_str().to_owned()).collect();
                    names.push(cycle[0].as_str().to_owned());
                    out.push(Violation::new(
                        HierarchyCycle,
                        &cycle[0],
                        format!("hierarchy cycle {}", names.join(" -> ")),
                    ));
                }
                break;
            }
            path.push(next.clone());
            cur = next;
        }
    }

    for n in &set.nodes {
        if !(n.weight > 0.0 && n.weight.is_finite()) {
            out.push(Violation::new(
                NonPositiveWeight,
                &n.node_id,
                format!("weight {} must be > 0", n.weight),
            ));
        }
        if !position_known(&n.position_id) {
            out.push(Violation::new(
                DanglingReference,
                &n.node_id,
                format!("unknown position {}", n.position_id),
            ));
        }
        if !boundary_known(&n.boundary_id) {
            out.push(Violation::new(
                DanglingReference,
                &n.node_id,
                format!("unknown boundary {}", n.boundary_id),
            ));
        }
        if let Some(r) = &n.risk_id {
            if !shared.risks.contains(r) {
                out.push(Violation::new(
                    DanglingReference,
                    &n.node_id,
                    format!("unknown risk {r}"),
                ));
            }
        }
        match n.cycle.kind {
            CycleKind::Periodic => {
                if n.cycle.min_cycle_secs.unwrap_or(0) == 0 {
                    out.push(Violation::new(
                        InvalidCycle,
                        &n.node_id,
                        "periodic cycle needs a positive min_cycle",
                    ));
                }
                if n.cycle.anchor.is_none() {
                    out.push(Violation::new(
                        InvalidCycle,
                        &n.node_id,
                        "periodic cycle needs an anchor",
                    ));
                }
            }
            CycleKind::Aperiodic => {
                if n.cycle.min_cycle_secs.is_some() || n.cycle.anchor.is_some() {
                    out.push(Violation::new(
                        InvalidCycle,
                        &n.node_id,
                        "aperiodic cycle carries min_cycle or anchor",
                    ));
                }
            }
        }
        match (n.trigger.kind, &n.trigger.event_category) {
            (TriggerKind::EventTriggered, None) => out.push(Violation::new(
                InvalidTrigger,
                &n.node_id,
                "event-triggered node needs an event category",
            )),
            (TriggerKind::EventTriggered, Some(c)) if c.as_str().is_empty() => out.push(
                Violation::new(InvalidTrigger, &n.node_id, "event category is empty"),
            ),
            (TriggerKind::Scheduled | TriggerKind::Manual, Some(_)) => out.push(Violation::new(
                InvalidTrigger,
                &n.node_id,
                "event category only allowed on event-triggered nodes",
            )),
            _ => {}
        }
        if let Some(sup) = &n.supervised_by {
            if n.category == ResponsibilityCategory::Supervision {
                out.push(Violation::new(
                    SupervisionSupervised,
                    &n.node_id,
                    "supervision node cannot itself be supervised",
                ));
            }
            match node_category(sup) {
                None => out.push(Violation::new(
                    DanglingReference,
                    &n.node_id,
                    format!("unknown supervising node {sup}"),
                )),
                Some(ResponsibilityCategory::Supervision) => {}
                Some(_) => out.push(Violation::new(
                    SupervisorNotSupervision,
                    &n.node_id,
                    format!("supervising node {sup} is not a SUPERVISION node"),
                )),
            }
        }
    }

    for l in &set.lists {
        if !position_known(&l.position_id) {
            out.push(Violation::new(
                DanglingReference,
                &l.list_id,
                format!("unknown position {}", l.position_id),
            ));
        }
        if l.items.is_empty() {
            out.push(Violation::new(EmptyList, &l.list_id, "list has no items"));
        }
        for item in &l.items {
            match local_nodes.get(item) {
                None => out.push(Violation::new(
                    DanglingReference,
                    item,
                    format!("list {} references unknown node", l.list_id),
                )),
                Some(node) if node.position_id != l.position_id => out.push(Violation::new(
                    ListPositionMismatch,
                    item,
                    format!(
                        "node assigned to {} but listed under {} in {}",
                        node.position_id, l.position_id, l.list_id
                    ),
                )),
                Some(_) => {}
            }
        }
    }

    ValidationReport { violations: out }
}

/// Validates every set of the enterprise plus enterprise-wide uniqueness.
pub fn validate_enterprise(ent: &Enterprise) -> ValidationReport {
    let mut out: Vec<Violation> = ent
        .sets
        .iter()
        .flat_map(|s| validate_set(s, &ent.registry_for(s)).violations)
        .collect();
    let mut global = Vec::new();
    check_duplicates("risk", ent.risks.iter().map(|r| &r.risk_id), &mut global);
    check_duplicates("set", ent.sets.iter().map(|s| &s.set_id), &mut global);
    check_duplicates(
        "department",
        ent.sets.iter().map(|s| &s.department_id),
        &mut global,
    );
    check_duplicates(
        "position",
        ent.positions().map(|p| &p.position_id),
        &mut global,
    );
    check_duplicates("node", ent.nodes().map(|n| &n.node_id), &mut global);
    check_duplicates("list", ent.lists().map(|l| &l.list_id), &mut global);
    check_duplicates(
        "boundary",
        ent.boundaries().map(|b| &b.boundary_id),
        &mut global,
    );
    for v in global {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    ValidationReport { violations: out }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("conflicting classification for category '{category}' at position {position}: SUBJECT and LEADERSHIP")]
    ConflictingClassification {
        position: PositionId,
        category: Category,
    },
    #[error("node {node} references unknown boundary {boundary}")]
    UnknownBoundary { node: NodeId, boundary: BoundaryId },
}

/// Outcome of classifying an event category against a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Classification {
    Covered(ResponsibilityCategory),
    NotCovered,
}

impl Classification {
    pub fn is_covered(self) -> bool {
        matches!(self, Classification::Covered(_))
    }
}

/// Looks up how `category` classifies under `boundary`. Covered categories
/// without an explicit rule default to `Subject`.
pub fn classify_event(boundary: &ResponsibilityBoundary, category: &Category) -> Classification {
    if !boundary.upper_bound.contains(category) {
        return Classification::NotCovered;
    }
    Classification::Covered(
        boundary
            .classify_rules
            .get(category)
            .copied()
            .unwrap_or(ResponsibilityCategory::Subject),
    )
}

/// Merges the classifications seen for one category.
///
/// `Leadership` outranks `Supervision`, which outranks `Subject`; seeing both
/// `Subject` and `Leadership` is ambiguous.
fn merge_classifications(
    seen: &BTreeSet<ResponsibilityCategory>,
) -> Option<ResponsibilityCategory> {
    use ResponsibilityCategory::*;
    if seen.contains(&Subject) && seen.contains(&Leadership) {
        return None;
    }
    seen.iter().max().copied()
}

/// Builds one boundary per position by combining the boundaries of the
/// position's nodes across all `sets`.
pub fn derive_boundaries<'a>(
    sets: impl IntoIterator<Item = &'a ResponsibilitySet>,
) -> Result<BTreeMap<PositionId, ResponsibilityBoundary>, ModelError> {
    let sets: Vec<&ResponsibilitySet> = sets.into_iter().collect();
    let boundaries: BTreeMap<&BoundaryId, &ResponsibilityBoundary> = sets
        .iter()
        .flat_map(|s| s.boundaries.iter())
        .map(|b| (&b.boundary_id, b))
        .collect();

    struct Acc<'b> {
        sources: BTreeSet<&'b BoundaryId>,
        upper: BTreeSet<Category>,
        lower: BTreeSet<Category>,
        rules: BTreeMap<Category, BTreeSet<ResponsibilityCategory>>,
        cases: BTreeSet<String>,
    }

    let mut per_position: BTreeMap<PositionId, Acc> = BTreeMap::new();
    for node in sets.iter().flat_map(|s| s.nodes.iter()) {
        let b = boundaries
            .get(&node.boundary_id)
            .ok_or_else(|| ModelError::UnknownBoundary {
                node: node.node_id.clone(),
                boundary: node.boundary_id.clone(),
            })?;
        let acc = per_position
            .entry(node.position_id.clone())
            .or_insert_with(|| Acc {
                sources: BTreeSet::new(),
                upper: BTreeSet::new(),
                lower: BTreeSet::new(),
                rules: BTreeMap::new(),
                cases: BTreeSet::new(),
            });
        acc.sources.insert(&b.boundary_id);
        acc.upper.extend(b.upper_bound.iter().cloned());
        if node.mandatory {
            acc.lower.extend(b.lower_bound.iter().cloned());
        }
        for (cat, rc) in &b.classify_rules {
            acc.rules.entry(cat.clone()).or_default().insert(*rc);
        }
        acc.cases.extend(b.relative_cases.iter().cloned());
    }

    let mut out = BTreeMap::new();
    for (position, acc) in per_position {
        let mut rules = BTreeMap::new();
        for (cat, seen) in acc.rules {
            let merged = merge_classifications(&seen).ok_or_else(|| {
                ModelError::ConflictingClassification {
                    position: position.clone(),
                    category: cat.clone(),
                }
            })?;
            rules.insert(cat, merged);
        }
        let sources: Vec<&ResponsibilityBoundary> =
            acc.sources.iter().map(|id| boundaries[*id]).collect();
        let (boundary_id, source_rule) = if sources.len() == 1 {
            (
                sources[0].boundary_id.clone(),
                sources[0].source_rule.clone(),
            )
        } else {
            let rules: BTreeSet<&str> = sources.iter().map(|b| b.source_rule.as_str()).collect();
            (
                BoundaryId::new(format!("derived:{position}")),
                rules.into_iter().collect::<Vec<_>>().join("; "),
            )
        };
        let relative_cases = if sources.len() == 1 {
            sources[0].relative_cases.clone()
        } else {
            acc.cases.into_iter().collect()
        };
        out.insert(
            position,
            ResponsibilityBoundary {
                boundary_id,
                source_rule,
                upper_bound: acc.upper,
                lower_bound: acc.lower,
                classify_rules: rules,
                relative_cases,
            },
        );
    }
    Ok(out)
}
