//! Runs the two-week shopping-mall scenario end to end in a temporary data
//! directory and prints rankings, the alarm case and the fire incident
//! accountability report.
//!
//!     cargo run --example shopping_mall

use responsibility_engine::engine::{ConfigSubmission, Engine};
use responsibility_engine::notify::MemoryNotifier;
use responsibility_engine::scenario;
use responsibility_engine::stream::feed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile_dir()?;
    let mut engine = Engine::open(&dir, Box::new(MemoryNotifier::default()))?;
    engine.submit_config(
        ConfigSubmission {
            base_version: None,
            enterprise: scenario::enterprise(),
            settings: None,
        },
        scenario::local(0, 0, 0),
    )?;
    for record in scenario::events() {
        feed(&mut engine, record)?;
    }
    let state = engine.state();
    for (period, closed) in &state.closed {
        println!("== {period}");
        for e in &closed.rankings.overall {
            let b = &closed.reports[&e.position_id].breakdown;
            println!(
                "  {:<13} total {:>6.2}  list {:>6.2}  attendance {:>6.2}  assessment {:>6.2}  deductions {:?}",
                e.position_id.as_str(),
                e.total,
                b.list_completion,
                b.attendance,
                b.performance_assessment,
                b.supervisory_deductions.iter().map(|d| (d.node_id.as_str(), d.amount)).collect::<Vec<_>>()
            );
        }
    }
    let case = &state.alarms[&scenario::fire_case_id()];
    println!(
        "alarm {} is {:?}, duty officer {:?}",
        case.case_id, case.state, case.duty_officer
    );
    let auto = state
        .fulfillments
        .iter()
        .find(|f| f.record.record_id == format!("alarm:{}", case.case_id))
        .expect("auto fulfillment");
    println!(
        "auto fulfillment on {} with completion {}",
        auto.record.node_id, auto.record.completion
    );

    let report = state.accountability(&scenario::fire_incident())?;
    println!(
        "incident {} ({:?} scores, period {})",
        report.incident_id, report.score_source, report.period
    );
    for r in &report.ranked {
        println!(
            "  {:<13} index {:.4}  relevance {:.4}  total {:.2}",
            r.position_id.as_str(),
            r.index,
            r.relevance,
            r.total
        );
    }
    println!("{} notifications logged", state.notifications.len());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("mall-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
