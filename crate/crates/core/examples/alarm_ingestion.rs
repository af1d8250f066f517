//! Ingests sensor events, follows a fire alarm from RAISED to CLOSED and
//! shows the fulfillment the closed case records.
//!
//!     cargo run --example alarm_ingestion

use responsibility_engine::engine::{ConfigSubmission, Engine};
use responsibility_engine::ingest::{HandlingReport, SensorEvent};
use responsibility_engine::model::RiskLevel;
use responsibility_engine::notify::MemoryNotifier;
use responsibility_engine::scenario::{self, local};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile_dir()?;
    let mut engine = Engine::open(&dir, Box::new(MemoryNotifier::default()))?;
    engine.submit_config(
        ConfigSubmission {
            base_version: None,
            enterprise: scenario::enterprise(),
            settings: None,
        },
        local(0, 0, 0),
    )?;

    for (id, category, severity) in [
        ("e-crowd", "crowd", RiskLevel::Medium),
        ("e-fire", "fire", RiskLevel::High),
        ("e-odd", "unknown", RiskLevel::Low),
    ] {
        let event = SensorEvent {
            event_id: id.into(),
            device_id: "sensor-1".into(),
            category: category.into(),
            severity,
            observed_at: local(0, 14, 0),
            payload: None,
        };
        let receipt = engine.ingest_event(event.clone(), local(0, 14, 0))?;
        let again = engine.ingest_event(event, local(0, 14, 1))?;
        println!(
            "{id}: seq {} unmapped {:?} case {:?}; resend duplicate={}",
            receipt.sequence, receipt.unmapped, receipt.case_id, again.duplicate
        );
    }

    let case = engine.acknowledge_alarm("case-e-fire", local(0, 14, 2))?;
    println!("after ack: {:?}", case.state);
    let report = HandlingReport {
        notified_parties: ["manager".into(), "patrol".into()].into(),
        processing_start: local(0, 14, 2),
        processing_end: local(0, 14, 9),
    };
    let case = engine.record_handling("case-e-fire", report, local(0, 14, 10))?;
    println!(
        "after handling: {:?}, notified {:?}",
        case.state, case.notified_parties
    );
    let auto = engine
        .state()
        .fulfillments
        .iter()
        .find(|f| f.record.record_id == "alarm:case-e-fire")
        .expect("recorded");
    println!(
        "fulfillment {} on {} completion {}",
        auto.record.record_id,
        auto.record.node_id.as_str(),
        auto.record.completion
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("alarm-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
