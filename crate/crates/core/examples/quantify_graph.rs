//! Quantifies the mall configuration: risk tuning, generated supervision,
//! the relationship DAG and position-to-node relevance.
//!
//!     cargo run --example quantify_graph

use std::collections::BTreeMap;

use responsibility_engine::graph::{assert_acyclic, relevance};
use responsibility_engine::model::{validate_enterprise, PositionId};
use responsibility_engine::quantify::{run_quantification, PerformanceThreshold, RiskTuningPolicy};
use responsibility_engine::scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ent = scenario::enterprise();
    println!(
        "validation: {} violations",
        validate_enterprise(&ent).violations.len()
    );

    // patrol keeps scoring 65 against a CRITICAL threshold of 90
    let mut scores: BTreeMap<PositionId, f64> = [
        ("patrol".into(), 65.0),
        ("duty-officer".into(), 95.0),
        ("manager".into(), 95.0),
    ]
    .into();
    let plan = run_quantification(
        &ent,
        &RiskTuningPolicy::default(),
        &PerformanceThreshold::default(),
        &mut scores,
    )?;
    println!(
        "outcome {:?} after {} iterations",
        plan.report.outcome, plan.iteration_count
    );
    for change in &plan.report.tuning {
        println!(
            "  tuned {} ({:?}): cycle {:?} -> {:?}, trigger {:?} -> {:?}",
            change.node_id.as_str(),
            change.level,
            change.cycle_before,
            change.cycle_after,
            change.trigger_before.kind,
            change.trigger_after.kind
        );
    }
    for node in &plan.supervision_nodes {
        println!(
            "  generated {} held by {}",
            node.node_id.as_str(),
            node.position_id.as_str()
        );
    }
    for w in &plan.report.warnings {
        println!("  warning {:?}: {}", w.kind, w.detail);
    }

    let order = assert_acyclic(&plan.graph)?;
    println!(
        "{} vertices, {} edges; order starts {:?}",
        order.len(),
        plan.graph.edges().len(),
        &order[..3]
    );
    for pos in ["manager", "duty-officer", "patrol"] {
        let r = relevance(&plan.graph, &pos.into(), &"fire-inspection".into(), 0.5)?;
        println!("  relevance({pos}, fire-inspection) = {r:.4}");
    }
    Ok(())
}
