#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

use responsibility_engine::api::Service;
use responsibility_engine::engine::{ConfigSubmission, Engine, EngineOptions, State};
use responsibility_engine::ingest::SensorEvent;
use responsibility_engine::model::{Enterprise, RiskLevel};
use responsibility_engine::notify::MemoryNotifier;
use responsibility_engine::period::Period;
use responsibility_engine::scenario;
use responsibility_engine::stream::{feed, StreamRecord};

pub fn open(dir: &Path, options: EngineOptions) -> Engine {
    Engine::open_with(dir, Box::new(MemoryNotifier::default()), options).expect("engine opens")
}

/// Opens an engine in `dir` and submits `ent` unless a config is present.
pub fn configured(dir: &Path, ent: Enterprise, options: EngineOptions) -> Engine {
    let mut engine = open(dir, options);
    if engine.state().config.is_none() {
        let sub = ConfigSubmission {
            base_version: None,
            enterprise: ent,
            settings: None,
        };
        engine
            .submit_config(sub, scenario::local(0, 0, 0))
            .expect("config accepted");
    }
    engine
}

/// Feeds records, ignoring records the engine refuses.
pub fn feed_all(engine: &mut Engine, records: impl IntoIterator<Item = StreamRecord>) {
    for r in records {
        match feed(engine, r) {
            Ok(_) => {}
            Err(responsibility_engine::engine::EngineError::Store(e)) => {
                panic!("storage failure: {e}")
            }
            Err(_) => {}
        }
    }
}

/// The mall scenario with random drops, value changes, resends and extra
/// sensor events.
pub fn perturbed_events(seed: u64) -> Vec<StreamRecord> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::new();
    for r in scenario::events() {
        if !matches!(r, StreamRecord::Tick { .. }) && rng.gen_bool(0.15) {
            continue;
        }
        let r = match r {
            StreamRecord::Fulfillment { at, mut record } => {
                if rng.gen_bool(0.5) {
                    record.completion = rng.gen_range(0..=100) as f64;
                }
                StreamRecord::Fulfillment { at, record }
            }
            StreamRecord::Supervision { at, mut record } => {
                if rng.gen_bool(0.5) {
                    record.supervisory_score =
                        rng.gen_range(0..=100) as f64 * record.supervisory_max / 100.0;
                }
                StreamRecord::Supervision { at, record }
            }
            StreamRecord::Attendance { at, mut record } => {
                record.attended = rng.gen_bool(0.8);
                StreamRecord::Attendance { at, record }
            }
            other => other,
        };
        if rng.gen_bool(0.05) {
            out.push(r.clone());
        }
        out.push(r);
    }
    for i in 0..rng.gen_range(0..4) {
        let category = ["fire", "crowd", "electrical", "slip", "unknown"][rng.gen_range(0..5)];
        let severity = RiskLevel::from_rank(rng.gen_range(1..=4)).expect("rank in range");
        let at = scenario::local(
            rng.gen_range(0..14),
            rng.gen_range(0..24),
            rng.gen_range(0..60),
        );
        out.push(StreamRecord::Sensor(SensorEvent {
            event_id: format!("rnd-{seed}-{i}"),
            device_id: "rnd-device".into(),
            category: category.into(),
            severity,
            observed_at: at,
            payload: None,
        }));
    }
    out.sort_by_key(StreamRecord::at);
    out
}

/// Every score breakdown the state can produce, canonically serialized.
pub fn breakdowns(state: &State) -> String {
    let ent = state.effective().expect("configured");
    let mut out: BTreeMap<String, Value> = BTreeMap::new();
    let periods: Vec<Option<Period>> = std::iter::once(None)
        .chain(state.closed.keys().copied().map(Some))
        .collect();
    for (period, closed) in &state.closed {
        out.insert(
            format!("closed/{period}"),
            serde_json::to_value(&closed.reports).unwrap(),
        );
    }
    for p in ent.positions() {
        for period in &periods {
            let key = format!(
                "score/{}/{}",
                p.position_id.as_str(),
                period.map_or("current".to_owned(), |p| p.to_string())
            );
            let v = match state.score(&p.position_id, *period) {
                Ok(r) => serde_json::to_value(&r.breakdown).unwrap(),
                Err(e) => Value::String(e.to_string()),
            };
            out.insert(key, v);
        }
    }
    serde_json::to_string(&out).unwrap()
}

/// GET targets a client can read after the mall scenario.
pub fn read_targets(state: &State) -> Vec<String> {
    let mut t: Vec<String> = [
        "/health",
        "/config",
        "/graph",
        "/quantification",
        "/reminders",
        "/alarms?since=0",
        "/alarms/case-evt-fire-1",
        "/incidents/inc-fire-1/report",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let periods: Vec<String> = state.closed.keys().map(|p| p.to_string()).collect();
    for p in &periods {
        t.push(format!("/rankings?period={p}"));
    }
    for pos in ["duty-officer", "patrol", "manager"] {
        t.push(format!("/positions/{pos}/lists"));
        t.push(format!("/positions/{pos}/series"));
        t.push(format!("/positions/{pos}/score"));
        for p in &periods {
            t.push(format!("/positions/{pos}/score?period={p}"));
        }
    }
    t
}

/// Status and body of every read target.
pub fn read_all(engine: Engine) -> (Vec<(String, u16, String)>, Engine) {
    let targets = read_targets(engine.state());
    let mut svc = Service::new(engine);
    let bodies = targets
        .into_iter()
        .map(|t| {
            let r = svc.handle("GET", &t, b"", None);
            (t, r.status, r.body)
        })
        .collect();
    (bodies, svc.into_engine())
}
