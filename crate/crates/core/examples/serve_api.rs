//! Drives the HTTP/JSON API in process, without opening a socket. Run
//! `respctl serve` for the network version.
//!
//!     cargo run --example serve_api

use responsibility_engine::api::Service;
use responsibility_engine::engine::Engine;
use responsibility_engine::notify::MemoryNotifier;
use responsibility_engine::scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("api-example-{}", std::process::id()));
    let engine = Engine::open(&dir, Box::new(MemoryNotifier::default()))?;
    let mut svc = Service::new(engine).with_clock(Box::new(|| scenario::local(0, 9, 0)));

    let config = serde_json::json!({"base_version": null, "enterprise": scenario::enterprise()});
    let calls: Vec<(&str, &str, String)> = vec![
        ("POST", "/config", config.to_string()),
        ("GET", "/health", String::new()),
        ("POST", "/fulfillments", serde_json::json!({
            "record_id": "f-1", "node_id": "floor-patrol",
            "period_start": scenario::local(0, 0, 0), "period_end": scenario::local(1, 0, 0), "completion": 90.0,
        }).to_string()),
        ("POST", "/fulfillments", serde_json::json!({"record_id": "f-2", "node_id": "no-such-node",
            "period_start": scenario::local(0, 0, 0), "period_end": scenario::local(1, 0, 0), "completion": 90.0}).to_string()),
        ("GET", "/positions/patrol/score", String::new()),
        ("GET", "/rankings?period=2026-W10", String::new()),
        ("GET", "/reminders", String::new()),
    ];
    for (method, target, body) in calls {
        let r = svc.handle(method, target, body.as_bytes(), None);
        let shown: String = r.body.chars().take(110).collect();
        println!("{method} {target} -> {} {shown}", r.status);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
