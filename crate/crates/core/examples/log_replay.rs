//! Writes the event log with periodic snapshots, simulates a crash that
//! tears the last line, and recovers the same state on reopen.
//!
//!     cargo run --example log_replay

use std::io::Write;

use responsibility_engine::engine::{ConfigSubmission, Engine, EngineOptions};
use responsibility_engine::notify::MemoryNotifier;
use responsibility_engine::scenario;
use responsibility_engine::store::LOG_FILE;
use responsibility_engine::stream::feed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("log-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let options = EngineOptions {
        snapshot_every: 50,
        load_snapshots: true,
    };
    let mut engine = Engine::open_with(&dir, Box::new(MemoryNotifier::default()), options.clone())?;
    engine.submit_config(
        ConfigSubmission {
            base_version: None,
            enterprise: scenario::enterprise(),
            settings: None,
        },
        scenario::local(0, 0, 0),
    )?;
    for r in scenario::events() {
        feed(&mut engine, r)?;
    }
    let before = engine.state().canonical();
    println!("{} entries written", engine.state().last_sequence);
    drop(engine);

    let mut log = std::fs::OpenOptions::new()
        .append(true)
        .open(dir.join(LOG_FILE))?;
    log.write_all(br#"{"sequence":99999,"kind":"FULFILLM"#)?;
    drop(log);

    let snapshots: Vec<String> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .filter(|n| n.starts_with("snapshot-"))
        .collect();
    println!("snapshots on disk: {}", snapshots.len());

    let reopened = Engine::open_with(&dir, Box::new(MemoryNotifier::default()), options)?;
    println!(
        "reopened at sequence {}; state identical: {}",
        reopened.state().last_sequence,
        reopened.state().canonical() == before
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
