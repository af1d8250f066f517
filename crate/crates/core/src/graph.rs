//! Weighted relationship DAG over positions and responsibility nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{NodeId, PositionId, ResponsibilityList, ResponsibilitySet};

pub const DEFAULT_DECAY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    Position(PositionId),
    Node(NodeId),
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::Position(p) => write!(f, "position:{p}"),
            Vertex::Node(n) => write!(f, "node:{n}"),
        }
    }
}

impl FromStr for Vertex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("position", id)) => Ok(Vertex::Position(id.into())),
            Some(("node", id)) => Ok(Vertex::Node(id.into())),
            _ => Err(format!("invalid vertex '{s}'")),
        }
    }
}

impl Serialize for Vertex {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Vertex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeKind {
    /// position -> position
    SuperiorOf,
    /// position -> node
    Assigned,
    /// supervision node -> supervised node
    Supervises,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub from: Vertex,
    pub to: Vertex,
    pub kind: EdgeKind,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("cycle detected: {}", fmt_cycle(.cycle))]
    CycleDetected { cycle: Vec<Vertex> },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown vertex {0}")]
    UnknownVertex(Vertex),
    #[error("invalid edge {from} -> {to}: {reason}")]
    InvalidEdge {
        from: Vertex,
        to: Vertex,
        reason: String,
    },
    #[error("decay must lie in (0, 1], got {0}")]
    InvalidDecay(String),
}

fn fmt_cycle(cycle: &[Vertex]) -> String {
    cycle
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" -> ")
}

/// Flat edge-list export plus the topological order of the vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagExport {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<RelationEdge>,
    pub topological_order: Vec<Vertex>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelationGraph {
    vertices: BTreeSet<Vertex>,
    edges: Vec<RelationEdge>,
    out: BTreeMap<Vertex, Vec<usize>>,
}

impl RelationGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, v: Vertex) {
        self.vertices.insert(v);
    }

    /// Adds an edge, checking endpoint classes, weight range and the
    /// one-edge-per-kind-per-pair rule. Does not check acyclicity.
    pub fn add_edge(&mut self, edge: RelationEdge) -> Result<(), GraphError> {
        let invalid = |reason: &str| GraphError::InvalidEdge {
            from: edge.from.clone(),
            to: edge.to.clone(),
            reason: reason.to_owned(),
        };
        let classes_ok = matches!(
            (&edge.kind, &edge.from, &edge.to),
            (
                EdgeKind::SuperiorOf,
                Vertex::Position(_),
                Vertex::Position(_)
            ) | (EdgeKind::Assigned, Vertex::Position(_), Vertex::Node(_))
                | (EdgeKind::Supervises, Vertex::Node(_), Vertex::Node(_))
        );
        if !classes_ok {
            return Err(invalid("endpoint classes do not match edge kind"));
        }
        if !(edge.weight > 0.0 && edge.weight <= 1.0) {
            return Err(invalid("weight outside (0, 1]"));
        }
        for v in [&edge.from, &edge.to] {
            if !self.vertices.contains(v) {
                return Err(GraphError::UnknownVertex(v.clone()));
            }
        }
        let dup = self.out.get(&edge.from).is_some_and(|idx| {
            idx.iter()
                .any(|&i| self.edges[i].to == edge.to && self.edges[i].kind == edge.kind)
        });
        if dup {
            return Err(invalid("duplicate edge of the same kind"));
        }
        self.out
            .entry(edge.from.clone())
            .or_default()
            .push(self.edges.len());
        self.edges.push(edge);
        Ok(())
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.iter()
    }

    pub fn edges(&self) -> &[RelationEdge] {
        &self.edges
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        self.vertices.contains(v)
    }

    pub fn outgoing<'a>(&'a self, v: &Vertex) -> impl Iterator<Item = &'a RelationEdge> + 'a {
        self.out
            .get(v)
            .into_iter()
            .flatten()
            .map(move |&i| &self.edges[i])
    }

    /// Positions holding an ASSIGNED edge to `node`.
    pub fn assigned_positions(&self, node: &NodeId) -> Vec<PositionId> {
        let target = Vertex::Node(node.clone());
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Assigned && e.to == target)
            .filter_map(|e| match &e.from {
                Vertex::Position(p) => Some(p.clone()),
                _ => None,
            })
            .collect()
    }

    /// Supervision nodes with a SUPERVISES edge into `node`.
    pub fn supervisors_of(&self, node: &NodeId) -> Vec<NodeId> {
        let target = Vertex::Node(node.clone());
        self.edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Supervises && e.to == target)
            .filter_map(|e| match &e.from {
                Vertex::Node(n) => Some(n.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn export(&self) -> Result<DagExport, GraphError> {
        let topological_order = assert_acyclic(self)?;
        let mut edges = self.edges.clone();
        edges.sort_by(|a, b| (&a.from, &a.to, a.kind).cmp(&(&b.from, &b.to, b.kind)));
        Ok(DagExport {
            vertices: self.vertices.iter().cloned().collect(),
            edges,
            topological_order,
        })
    }

    pub fn from_export(doc: &DagExport) -> Result<Self, GraphError> {
        let mut g = RelationGraph::new();
        for v in &doc.vertices {
            g.add_vertex(v.clone());
        }
        for e in &doc.edges {
            g.add_edge(e.clone())?;
        }
        Ok(g)
    }
}

/// Builds the relationship DAG over the positions and nodes of `sets`.
///
/// SUPERIOR_OF and SUPERVISES edges carry weight 1. ASSIGNED edges carry the
/// node weight divided by the largest node weight of the same position.
pub fn build_graph<'a>(
    sets: impl IntoIterator<Item = &'a ResponsibilitySet>,
) -> Result<RelationGraph, GraphError> {
    let sets: Vec<&ResponsibilitySet> = sets.into_iter().collect();
    let mut g = RelationGraph::new();
    for s in &sets {
        for p in &s.positions {
            g.add_vertex(Vertex::Position(p.position_id.clone()));
        }
        for n in &s.nodes {
            g.add_vertex(Vertex::Node(n.node_id.clone()));
        }
    }

    for p in sets.iter().flat_map(|s| s.positions.iter()) {
        if let Some(sup) = &p.superior {
            let from = Vertex::Position(sup.clone());
            if g.contains(&from) {
                g.add_edge(RelationEdge {
                    from,
                    to: Vertex::Position(p.position_id.clone()),
                    kind: EdgeKind::SuperiorOf,
                    weight: 1.0,
                })?;
            }
        }
    }

    let mut max_weight: BTreeMap<&PositionId, f64> = BTreeMap::new();
    for n in sets.iter().flat_map(|s| s.nodes.iter()) {
        let m = max_weight.entry(&n.position_id).or_insert(0.0);
        *m = m.max(n.weight);
    }
    for n in sets.iter().flat_map(|s| s.nodes.iter()) {
        let from = Vertex::Position(n.position_id.clone());
        if !g.contains(&from) {
            continue;
        }
        g.add_edge(RelationEdge {
            from,
            to: Vertex::Node(n.node_id.clone()),
            kind: EdgeKind::Assigned,
            weight: n.weight / max_weight[&n.position_id],
        })?;
    }

    for n in sets.iter().flat_map(|s| s.nodes.iter()) {
        if let Some(sup) = &n.supervised_by {
            let from = Vertex::Node(sup.clone());
            if g.contains(&from) {
                g.add_edge(RelationEdge {
                    from,
                    to: Vertex::Node(n.node_id.clone()),
                    kind: EdgeKind::Supervises,
                    weight: 1.0,
                })?;
            }
        }
    }

    assert_acyclic(&g)?;
    Ok(g)
}

/// Returns a topological order of all vertices, or one concrete cycle.
///
/// Among ready vertices the smallest is taken first, so the order is
/// deterministic.
pub fn assert_acyclic(graph: &RelationGraph) -> Result<Vec<Vertex>, GraphError> {
    let mut indegree: BTreeMap<&Vertex, usize> = graph.vertices.iter().map(|v| (v, 0)).collect();
    for e in &graph.edges {
        *indegree.entry(&e.to).or_default() += 1;
    }
    let mut ready: BTreeSet<&Vertex> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(v, _)| *v)
        .collect();
    let mut order = Vec::with_capacity(indegree.len());
    while let Some(v) = ready.pop_first() {
        order.push(v.clone());
        for e in graph.outgoing(v) {
            let d = indegree.get_mut(&e.to).expect("edge endpoint registered");
            *d -= 1;
            if *d == 0 {
                ready.insert(&e.to);
            }
        }
    }
    if order.len() == indegree.len() {
        return Ok(order);
    }

    // Every unprocessed vertex still has an unprocessed predecessor, so walking
    // predecessors inside the remainder must revisit a vertex.
    let remaining: BTreeSet<&Vertex> = indegree
        .iter()
        .filter(|(_, &d)| d > 0)
        .map(|(v, _)| *v)
        .collect();
    let mut path: Vec<&Vertex> = vec![*remaining.iter().next().expect("nonempty remainder")];
    loop {
        let cur = *path.last().expect("nonempty path");
        let pred = graph
            .edges
            .iter()
            .filter(|e| &e.to == cur && remaining.contains(&e.from))
            .map(|e| &e.from)
            .min()
            .expect("unprocessed vertex has an unprocessed predecessor");
        if let Some(at) = path.iter().position(|v| *v == pred) {
            let mut cycle: Vec<Vertex> = path[at..].iter().rev().map(|v| (*v).clone()).collect();
            cycle.push(cycle[0].clone());
            return Err(GraphError::CycleDetected { cycle });
        }
        path.push(pred);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Linkage {
    /// Node seen in collected data; linked to its declared position.
    Confirmed { position_id: PositionId },
    /// Node absent from collected data; referred to every position whose
    /// lists reference it.
    Referral { positions: Vec<PositionId> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub node_id: NodeId,
    pub linkage: Linkage,
    /// Set when a referral finds no candidate list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub fn link_collected_node<'a>(
    graph: &RelationGraph,
    node_id: &NodeId,
    observed: bool,
    candidate_lists: impl IntoIterator<Item = &'a ResponsibilityList>,
) -> Result<LinkRecord, GraphError> {
    if !graph.contains(&Vertex::Node(node_id.clone())) {
        return Err(GraphError::UnknownNode(node_id.clone()));
    }
    if observed {
        if let Some(position_id) = graph.assigned_positions(node_id).into_iter().next() {
            return Ok(LinkRecord {
                node_id: node_id.clone(),
                linkage: Linkage::Confirmed { position_id },
                warning: None,
            });
        }
    }
    let positions: BTreeSet<PositionId> = candidate_lists
        .into_iter()
        .filter(|l| l.items.contains(node_id))
        .map(|l| l.position_id.clone())
        .collect();
    let warning = positions
        .is_empty()
        .then(|| format!("node {node_id} is not referenced by any list"));
    Ok(LinkRecord {
        node_id: node_id.clone(),
        linkage: Linkage::Referral {
            positions: positions.into_iter().collect(),
        },
        warning,
    })
}

/// Sum over all directed paths from `position` to `node` of the product of
/// edge weights, times `decay^(path length - 1)`.
///
/// Computed by dynamic programming over the DAG rather than by listing
/// paths; the two agree exactly in exact arithmetic.
pub fn relevance(
    graph: &RelationGraph,
    position: &PositionId,
    node: &NodeId,
    decay: f64,
) -> Result<f64, GraphError> {
    if !(decay > 0.0 && decay <= 1.0) {
        return Err(GraphError::InvalidDecay(decay.to_string()));
    }
    let source = Vertex::Position(position.clone());
    let target = Vertex::Node(node.clone());
    for v in [&source, &target] {
        if !graph.contains(v) {
            return Err(GraphError::UnknownVertex(v.clone()));
        }
    }
    let order = assert_acyclic(graph)?;
    // reach[v] = sum over paths v -> target of (product of weights) * decay^len
    let mut reach: BTreeMap<&Vertex, f64> = BTreeMap::new();
    for v in order.iter().rev() {
        let value = if *v == target {
            1.0
        } else {
            graph
                .outgoing(v)
                .map(|e| e.weight * decay * reach.get(&e.to).copied().unwrap_or(0.0))
                .sum()
        };
        reach.insert(v, value);
    }
    // The first hop is not decayed.
    Ok(graph
        .outgoing(&source)
        .map(|e| e.weight * reach.get(&e.to).copied().unwrap_or(0.0))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::test_support::*;

    fn pos(id: &str) -> Vertex {
        Vertex::Position(id.into())
    }

    fn nd(id: &str) -> Vertex {
        Vertex::Node(id.into())
    }

    fn edge(from: Vertex, to: Vertex, kind: EdgeKind, weight: f64) -> RelationEdge {
        RelationEdge {
            from,
            to,
            kind,
            weight,
        }
    }

    // Independent oracle: enumerate every path by DFS.
    fn relevance_by_paths(g: &RelationGraph, from: &Vertex, to: &Vertex, decay: f64) -> f64 {
        fn walk(
            g: &RelationGraph,
            v: &Vertex,
            to: &Vertex,
            prod: f64,
            len: i32,
            decay: f64,
            acc: &mut f64,
        ) {
            if v == to && len > 0 {
                *acc += prod * decay.powi(len - 1);
                return;
            }
            for e in g.outgoing(v) {
                walk(g, &e.to, to, prod * e.weight, len + 1, decay, acc);
            }
        }
        let mut acc = 0.0;
        walk(g, from, to, 1.0, 0, decay, &mut acc);
        acc
    }

    #[test]
    fn single_node_gets_unit_weight() {
        let mut set = crate::model::ResponsibilitySet::empty("s", "d");
        set.boundaries.push(boundary("b", &["fire"], &[]));
        set.positions.push(position("p", "d", None));
        set.nodes.push(node("n", "p", "b", 3.0));
        let g = build_graph([&set]).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edges()[0].kind, EdgeKind::Assigned);
        assert_eq!(g.edges()[0].weight, 1.0);
    }

    #[test]
    fn tree_shape_edges() {
        let mut set = crate::model::ResponsibilitySet::empty("s", "d");
        set.boundaries.push(boundary("b", &["fire"], &[]));
        set.positions.push(position("a", "d", None));
        set.positions.push(position("b", "d", Some("a")));
        set.nodes.push(node("na", "a", "b", 1.0));
        set.nodes.push(node("nb", "b", "b", 1.0));
        let g = build_graph([&set]).unwrap();
        let kinds: Vec<_> = g.edges().iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds.iter().filter(|k| **k == EdgeKind::Assigned).count(),
            2
        );
        assert_eq!(
            kinds.iter().filter(|k| **k == EdgeKind::SuperiorOf).count(),
            1
        );
        assert!(assert_acyclic(&g).is_ok());
    }

    #[test]
    fn assigned_weights_normalize_by_max() {
        let mut set = crate::model::ResponsibilitySet::empty("s", "d");
        set.boundaries.push(boundary("b", &["fire"], &[]));
        set.positions.push(position("p", "d", None));
        for (id, w) in [("n2", 2.0), ("n4", 4.0), ("n8", 8.0)] {
            set.nodes.push(node(id, "p", "b", w));
        }
        let g = build_graph([&set]).unwrap();
        let mut ws: Vec<f64> = g.edges().iter().map(|e| e.weight).collect();
        ws.sort_by(f64::total_cmp);
        assert_eq!(ws, [0.25, 0.5, 1.0]);
    }

    #[test]
    fn supervision_edges_point_at_supervised_nodes() {
        let mut set = crate::model::ResponsibilitySet::empty("s", "d");
        set.boundaries.push(boundary("b", &["fire"], &[]));
        set.positions.push(position("a", "d", None));
        set.positions.push(position("b", "d", Some("a")));
        let mut sup = node("sup", "a", "b", 1.0);
        sup.category = crate::model::ResponsibilityCategory::Supervision;
        let mut work = node("work", "b", "b", 1.0);
        work.supervised_by = Some("sup".into());
        set.nodes.extend([sup, work]);
        let g = build_graph([&set]).unwrap();
        assert_eq!(g.supervisors_of(&"work".into()), vec![NodeId::from("sup")]);
    }

    #[test]
    fn empty_and_chain_orders() {
        assert!(assert_acyclic(&RelationGraph::new()).unwrap().is_empty());
        let mut g = RelationGraph::new();
        for v in ["c", "b", "a"] {
            g.add_vertex(pos(v));
        }
        g.add_edge(edge(pos("c"), pos("b"), EdgeKind::SuperiorOf, 1.0))
            .unwrap();
        g.add_edge(edge(pos("b"), pos("a"), EdgeKind::SuperiorOf, 1.0))
            .unwrap();
        assert_eq!(
            assert_acyclic(&g).unwrap(),
            vec![pos("c"), pos("b"), pos("a")]
        );
    }

    #[test]
    fn cycle_is_reported_concretely() {
        let mut g = RelationGraph::new();
        for v in ["a", "b", "c", "z"] {
            g.add_vertex(pos(v));
        }
        g.add_edge(edge(pos("z"), pos("a"), EdgeKind::SuperiorOf, 1.0))
            .unwrap();
        g.add_edge(edge(pos("a"), pos("b"), EdgeKind::SuperiorOf, 1.0))
            .unwrap();
        g.add_edge(edge(pos("b"), pos("c"), EdgeKind::SuperiorOf, 1.0))
            .unwrap();
        g.add_edge(edge(pos("c"), pos("a"), EdgeKind::SuperiorOf, 1.0))
            .unwrap();
        match assert_acyclic(&g) {
            Err(GraphError::CycleDetected { cycle }) => {
                assert_eq!(cycle.first(), cycle.last());
                assert_eq!(cycle.len(), 4);
                for w in cycle.windows(2) {
                    assert!(g.outgoing(&w[0]).any(|e| e.to == w[1]));
                }
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn edge_rules_are_enforced() {
        let mut g = RelationGraph::new();
        g.add_vertex(pos("a"));
        g.add_vertex(nd("n"));
        assert!(g
            .add_edge(edge(nd("n"), pos("a"), EdgeKind::Assigned, 1.0))
            .is_err());
        assert!(g
            .add_edge(edge(pos("a"), nd("n"), EdgeKind::Assigned, 0.0))
            .is_err());
        assert!(g
            .add_edge(edge(pos("a"), nd("n"), EdgeKind::Assigned, 1.5))
            .is_err());
        g.add_edge(edge(pos("a"), nd("n"), EdgeKind::Assigned, 1.0))
            .unwrap();
        assert!(g
            .add_edge(edge(pos("a"), nd("n"), EdgeKind::Assigned, 0.5))
            .is_err());
    }

    fn relevance_fixture() -> RelationGraph {
        let mut g = RelationGraph::new();
        for v in [pos("boss"), pos("p"), nd("n"), nd("sup"), pos("other")] {
            g.add_vertex(v);
        }
        g.add_edge(edge(pos("boss"), pos("p"), EdgeKind::SuperiorOf, 1.0))
            .unwrap();
        g.add_edge(edge(pos("p"), nd("n"), EdgeKind::Assigned, 0.5))
            .unwrap();
        g.add_edge(edge(pos("boss"), nd("sup"), EdgeKind::Assigned, 1.0))
            .unwrap();
        g.add_edge(edge(nd("sup"), nd("n"), EdgeKind::Supervises, 1.0))
            .unwrap();
        g
    }

    #[test]
    fn relevance_examples() {
        let g = relevance_fixture();
        assert_eq!(relevance(&g, &"p".into(), &"n".into(), 0.5).unwrap(), 0.5);
        // boss -> p -> n: 1.0 * 0.5 * 0.5 ; boss -> sup -> n: 1.0 * 1.0 * 0.5
        let r = relevance(&g, &"boss".into(), &"n".into(), 0.5).unwrap();
        assert_eq!(r, 0.25 + 0.5);
        assert_eq!(
            relevance(&g, &"other".into(), &"n".into(), 0.5).unwrap(),
            0.0
        );
        assert!(matches!(
            relevance(&g, &"ghost".into(), &"n".into(), 0.5),
            Err(GraphError::UnknownVertex(_))
        ));
        assert!(relevance(&g, &"p".into(), &"n".into(), 0.0).is_err());
    }

    #[test]
    fn two_hop_path_decays_once() {
        let mut g = RelationGraph::new();
        for v in [pos("a"), pos("b"), nd("n")] {
            g.add_vertex(v);
        }
        g.add_edge(edge(pos("a"), pos("b"), EdgeKind::SuperiorOf, 1.0))
            .unwrap();
        g.add_edge(edge(pos("b"), nd("n"), EdgeKind::Assigned, 0.5))
            .unwrap();
        let r = relevance(&g, &"a".into(), &"n".into(), 0.5).unwrap();
        assert_eq!(r, 0.25);
        assert_eq!(r, relevance_by_paths(&g, &pos("a"), &nd("n"), 0.5));
    }

    #[test]
    fn linkage_cases() {
        let g = relevance_fixture();
        let lists = vec![list("l1", "p", &["n"]), list("l2", "boss", &["n"])];
        let r = link_collected_node(&g, &"n".into(), true, &lists).unwrap();
        assert_eq!(
            r.linkage,
            Linkage::Confirmed {
                position_id: "p".into()
            }
        );

        let r = link_collected_node(&g, &"n".into(), false, &lists).unwrap();
        assert_eq!(
            r.linkage,
            Linkage::Referral {
                positions: vec!["boss".into(), "p".into()]
            }
        );
        assert!(r.warning.is_none());

        let r = link_collected_node(&g, &"sup".into(), false, &lists).unwrap();
        assert_eq!(r.linkage, Linkage::Referral { positions: vec![] });
        assert!(r.warning.is_some());

        assert!(matches!(
            link_collected_node(&g, &"ghost".into(), true, &lists),
            Err(GraphError::UnknownNode(_))
        ));
    }

    #[test]
    fn export_round_trips() {
        let g = relevance_fixture();
        let doc = g.export().unwrap();
        let back = RelationGraph::from_export(&doc).unwrap();
        assert_eq!(back.export().unwrap(), doc);
        let json = serde_json::to_string(&doc).unwrap();
        assert!(json.contains("\"from\":\"position:boss\""));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        // Random DAG over position and node vertices: edges only go from lower
        // to higher index, so acyclicity is guaranteed by construction.
        fn random_dag() -> impl Strategy<Value = RelationGraph> {
            (
                2usize..8,
                proptest::collection::vec((0usize..8, 0usize..8, 1u32..=4), 0..16),
            )
                .prop_map(|(n, raw)| {
                    let mut g = RelationGraph::new();
                    let vs: Vec<Vertex> = (0..n).map(|i| pos(&format!("v{i}"))).collect();
                    for v in &vs {
                        g.add_vertex(v.clone());
                    }
                    for (a, b, w) in raw {
                        let (a, b) = (a % n, b % n);
                        if a < b {
                            let _ = g.add_edge(edge(
                                vs[a].clone(),
                                vs[b].clone(),
                                EdgeKind::SuperiorOf,
                                w as f64 / 4.0,
                            ));
                        }
                    }
                    g
                })
        }

        proptest! {
            #[test]
            fn order_puts_every_edge_forward(g in random_dag()) {
                let order = assert_acyclic(&g).unwrap();
                let idx: BTreeMap<&Vertex, usize> = order.iter().enumerate().map(|(i, v)| (v, i)).collect();
                prop_assert_eq!(order.len(), g.vertices().count());
                for e in g.edges() {
                    prop_assert!(idx[&e.from] < idx[&e.to]);
                }
            }

            #[test]
            fn dp_matches_path_enumeration(g in random_dag(), decay in 0.05f64..=1.0) {
                let order = assert_acyclic(&g).unwrap();
                let mut g2 = g.clone();
                g2.add_vertex(nd("t"));
                g2.add_edge(edge(order.last().unwrap().clone(), nd("t"), EdgeKind::Assigned, 1.0)).unwrap();
                let Vertex::Position(p) = order[0].clone() else { unreachable!() };
                let dp = relevance(&g2, &p, &"t".into(), decay).unwrap();
                let brute = relevance_by_paths(&g2, &order[0], &nd("t"), decay);
                prop_assert!((dp - brute).abs() <= 1e-12 * brute.max(1.0));

                // bounded by the number of paths
                let mut unit = RelationGraph::new();
                for v in g2.vertices() { unit.add_vertex(v.clone()); }
                for e in g2.edges() {
                    let mut e = e.clone();
                    e.weight = 1.0;
                    unit.add_edge(e).unwrap();
                }
                let paths = relevance_by_paths(&unit, &order[0], &nd("t"), 1.0);
                prop_assert!(dp <= paths + 1e-9);
            }

            #[test]
            fn removing_an_edge_never_increases_relevance(g in random_dag(), pick in 0usize..16) {
                let order = assert_acyclic(&g).unwrap();
                let mut g2 = g.clone();
                g2.add_vertex(nd("t"));
                let last = order.last().unwrap().clone();
                g2.add_edge(edge(last, nd("t"), EdgeKind::Assigned, 1.0)).unwrap();
                let Vertex::Position(p) = order[0].clone() else { unreachable!() };
                let full = relevance(&g2, &p, &"t".into(), 0.5).unwrap();
                if g2.edges().is_empty() { return Ok(()); }
                let drop = pick % g2.edges().len();
                let mut h = RelationGraph::new();
                for v in g2.vertices() { h.add_vertex(v.clone()); }
                for (i, e) in g2.edges().iter().enumerate() {
                    if i != drop { h.add_edge(e.clone()).unwrap(); }
                }
                let reduced = relevance(&h, &p, &"t".into(), 0.5).unwrap();
                prop_assert!(reduced <= full + 1e-12);
            }
        }
    }
}
