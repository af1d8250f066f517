//! Ranks positions for an incident by graph relevance and score shortfall.
//!
//!     cargo run --example accountability

use std::collections::BTreeMap;

use responsibility_engine::accountability::{accountability_rank, RankOptions, ScoreSource};
use responsibility_engine::model::PositionId;
use responsibility_engine::quantify::{effective_configuration, RiskTuningPolicy};
use responsibility_engine::scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plan = effective_configuration(&scenario::enterprise(), &RiskTuningPolicy::default())?;
    let incident = scenario::fire_incident();
    let period = "2026-W11".parse()?;
    let scores: BTreeMap<PositionId, f64> = [
        ("patrol".into(), 42.0),
        ("duty-officer".into(), 91.0),
        ("manager".into(), 88.0),
    ]
    .into();
    let report = accountability_rank(
        &incident,
        &plan.enterprise,
        &plan.graph,
        period,
        &scores,
        ScoreSource::Closed,
        &RankOptions::default(),
    )?;
    println!(
        "incident {} touches {:?}",
        report.incident_id, report.related_node_ids
    );
    println!("low scorers: {:?}", report.low_score_positions);
    for r in &report.ranked {
        println!(
            "  {:<13} index {:.4} = relevance {:.4} x shortfall {:.2}",
            r.position_id.as_str(),
            r.index,
            r.relevance,
            1.0 - r.total / 100.0
        );
    }
    Ok(())
}
