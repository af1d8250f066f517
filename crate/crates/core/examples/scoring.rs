//! Scores one position by hand: weighted list completion, the supervisory
//! deduction and the composed total.
//!
//!     cargo run --example scoring

use std::collections::{BTreeMap, BTreeSet};

use responsibility_engine::model::{NodeId, ReportingPeriod, ResponsibilityList};
use responsibility_engine::period::Period;
use responsibility_engine::scenario::local;
use responsibility_engine::scoring::{
    apply_supervisory_rule, breakdown, recommend_scores, Components, ScoringPolicy,
    SupervisionRecord,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let policy = ScoringPolicy::default();
    let list = ResponsibilityList {
        list_id: "l-patrol".into(),
        position_id: "patrol".into(),
        items: vec![
            "fire-inspection".into(),
            "floor-patrol".into(),
            "wet-floor-check".into(),
        ],
        mandatory: true,
        reporting_period: ReportingPeriod::Weekly,
    };
    let weights: BTreeMap<NodeId, f64> = [
        ("fire-inspection".into(), 3.0),
        ("floor-patrol".into(), 2.0),
        ("wet-floor-check".into(), 1.0),
    ]
    .into();
    let completions: BTreeMap<NodeId, f64> = [
        ("fire-inspection".into(), 80.0),
        ("floor-patrol".into(), 70.0),
        ("wet-floor-check".into(), 60.0),
    ]
    .into();

    for supervisory_score in [49.0, 50.0] {
        let sup = SupervisionRecord {
            record_id: "sup-1".into(),
            supervision_node_id: "sup-l-patrol".into(),
            supervised_node_id: "fire-inspection".into(),
            period_start: local(0, 17, 0),
            period_end: local(0, 18, 0),
            supervisory_score,
            supervisory_max: 100.0,
            submitted_at: local(0, 18, 0),
        };
        let deductions = apply_supervisory_rule([&sup], &completions, &policy)?;
        let recommended = recommend_scores(
            [&list],
            |n| weights[n],
            &completions,
            &BTreeSet::new(),
            &deductions,
        );
        let list_completion = {
            let num: f64 = weights.iter().map(|(n, w)| w * completions[n]).sum();
            num / weights.values().sum::<f64>()
        };
        let b = breakdown(
            "patrol".into(),
            "2026-W10".parse::<Period>()?,
            Components {
                list_completion,
                attendance: 85.0,
                performance_assessment: 70.0,
                self_eval_bonus: 0.0,
                deductions,
            },
            &policy,
        );
        println!(
            "supervision {supervisory_score}/100: recommended {recommended:?}, total {}",
            b.total
        );
    }
    Ok(())
}
