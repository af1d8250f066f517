//! Splits task instances into quiet and reminder sets, orders the queue
//! and dispatches due reminders exactly once.
//!
//!     cargo run --example reminders

use chrono::Duration;

use responsibility_engine::model::RiskLevel;
use responsibility_engine::notify::MemoryNotifier;
use responsibility_engine::reminder::{partition, LeadTimes, ReminderDispatcher, TaskInstance};
use responsibility_engine::scenario::local;

fn task(
    node: &str,
    risk: RiskLevel,
    end_hours: i64,
    score: Option<f64>,
    done: bool,
) -> TaskInstance {
    TaskInstance {
        node_id: node.into(),
        position_id: "patrol".into(),
        periodic: true,
        risk_level: risk,
        weight: 1.0,
        period_start: local(0, 0, 0),
        period_end: local(0, 0, 0) + Duration::hours(end_hours),
        executed: done,
        scored: done,
        supervision_ok: true,
        data_valid: false,
        current_score: score,
    }
}

fn main() {
    let tasks = vec![
        task("floor-patrol", RiskLevel::Medium, 24, Some(70.0), false),
        task("fire-inspection", RiskLevel::Critical, 24, None, false),
        task("wet-floor-check", RiskLevel::Low, 12, Some(40.0), false),
        task("shift-handover", RiskLevel::Low, 24, Some(100.0), true),
    ];
    let p = partition(tasks);
    println!(
        "quiet: {:?}",
        p.quiet
            .iter()
            .map(|t| t.node_id.as_str())
            .collect::<Vec<_>>()
    );
    println!(
        "queue: {:?}",
        p.queue
            .iter()
            .map(|t| t.node_id.as_str())
            .collect::<Vec<_>>()
    );

    let leads = LeadTimes::default();
    let mut dispatcher = ReminderDispatcher::new();
    let mut sink = MemoryNotifier::default();
    for hour in [6, 12, 18] {
        let out = dispatcher.emit(&p, local(0, hour, 0), &leads, &mut sink);
        let sent: Vec<_> = out
            .dispatched
            .iter()
            .map(|r| (r.node_id.as_str(), r.urgency))
            .collect();
        println!("{hour:02}:00 dispatched {sent:?}");
    }
}
