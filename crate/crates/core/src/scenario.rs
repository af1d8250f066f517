//! Shopping-mall reference scenario: a three-position security setup and
//! two weeks of activity including one fire alarm.
//!
//! The committed files under `fixtures/` are generated from this module.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, FixedOffset, TimeZone, Utc};

use crate::accountability::Incident;
use crate::engine::{
    AssessmentSubmission, AttendanceSubmission, FulfillmentSubmission, SupervisionSubmission,
};
use crate::ingest::{HandlingReport, SensorEvent};
use crate::model::{
    Category, CollectionMethod, CycleSpec, Enterprise, EvaluationMethod, Position, ReportingPeriod,
    ResponsibilityBoundary, ResponsibilityCategory, ResponsibilityList, ResponsibilityNode,
    ResponsibilitySet, RiskLevel, RiskSource, TaskType, TriggerMethod,
};
use crate::stream::StreamRecord;

pub const UTC_OFFSET_MINUTES: i32 = 8 * 60;
const DAY: u64 = 86_400;

/// Local wall-clock time on scenario day `day` (day 0 is Monday 2 March 2026).
pub fn local(day: i64, hour: u32, minute: u32) -> DateTime<Utc> {
    let tz = FixedOffset::east_opt(UTC_OFFSET_MINUTES * 60).expect("valid offset");
    let start = tz
        .with_ymd_and_hms(2026, 3, 2, hour, minute, 0)
        .single()
        .expect("valid time");
    (start + Duration::days(day)).with_timezone(&Utc)
}

fn start() -> DateTime<Utc> {
    local(0, 0, 0)
}

fn risk(id: &str, level: RiskLevel, description: &str) -> RiskSource {
    RiskSource {
        risk_id: id.into(),
        description: description.into(),
        level,
        category: id.into(),
    }
}

fn boundary(
    id: &str,
    rule: &str,
    upper: &[&str],
    lower: &[&str],
    rules: &[(&str, ResponsibilityCategory)],
) -> ResponsibilityBoundary {
    ResponsibilityBoundary {
        boundary_id: id.into(),
        source_rule: rule.into(),
        upper_bound: upper.iter().map(|c| Category::from(*c)).collect(),
        lower_bound: lower.iter().map(|c| Category::from(*c)).collect(),
        classify_rules: rules
            .iter()
            .map(|(c, r)| (Category::from(*c), *r))
            .collect(),
        relative_cases: Vec::new(),
    }
}

fn position(
    id: &str,
    title: &str,
    dept: &str,
    superior: Option<&str>,
    subordinates: &[&str],
) -> Position {
    Position {
        position_id: id.into(),
        title: title.into(),
        department_id: dept.into(),
        superior: superior.map(Into::into),
        subordinates: subordinates.iter().map(|s| (*s).into()).collect(),
        risk_ids: BTreeSet::new(),
    }
}

struct NodeSpec<'a> {
    id: &'a str,
    title: &'a str,
    position: &'a str,
    boundary: &'a str,
    risk: Option<&'a str>,
    cycle_days: Option<u64>,
    trigger: TriggerMethod,
    weight: f64,
}

fn node(spec: NodeSpec<'_>) -> ResponsibilityNode {
    ResponsibilityNode {
        node_id: spec.id.into(),
        title: spec.title.into(),
        position_id: spec.position.into(),
        category: ResponsibilityCategory::Subject,
        task_type: TaskType::Primary,
        mandatory: true,
        cycle: match spec.cycle_days {
            Some(d) => CycleSpec::periodic(d * DAY, start()),
            None => CycleSpec::aperiodic(),
        },
        trigger: spec.trigger,
        evaluation: EvaluationMethod::Evaluation,
        weight: spec.weight,
        risk_id: spec.risk.map(Into::into),
        boundary_id: spec.boundary.into(),
        collection: CollectionMethod::Manual,
        supervised_by: None,
        alarm_handling: false,
        response_budget_secs: None,
        consensus: None,
    }
}

fn list(id: &str, position: &str, items: &[&str]) -> ResponsibilityList {
    ResponsibilityList {
        list_id: id.into(),
        position_id: position.into(),
        items: items.iter().map(|i| (*i).into()).collect(),
        mandatory: true,
        reporting_period: ReportingPeriod::Weekly,
    }
}

/// The mall configuration: security (duty officer, patrol) and management
/// (manager) departments.
pub fn enterprise() -> Enterprise {
    use ResponsibilityCategory::*;
    let mut security = ResponsibilitySet::empty("set-security", "security");
    security.positions = vec![
        position(
            "duty-officer",
            "Duty officer",
            "security",
            Some("manager"),
            &["patrol"],
        ),
        position(
            "patrol",
            "Floor patrol",
            "security",
            Some("duty-officer"),
            &[],
        ),
    ];
    security.boundaries = vec![
        boundary(
            "b-fire",
            "Fire Protection Law art. 16",
            &["fire", "smoke"],
            &["fire"],
            &[("fire", Subject)],
        ),
        boundary(
            "b-crowd",
            "Large venue crowd safety rule 4.2",
            &["crowd"],
            &["crowd"],
            &[],
        ),
        boundary(
            "b-slip",
            "Mall housekeeping standard 3.1",
            &["slip"],
            &["slip"],
            &[],
        ),
    ];
    let mut alarm = node(NodeSpec {
        id: "alarm-response",
        title: "Respond to fire alarms",
        position: "duty-officer",
        boundary: "b-fire",
        risk: Some("fire"),
        cycle_days: None,
        trigger: TriggerMethod::on_event("fire"),
        weight: 3.0,
    });
    alarm.alarm_handling = true;
    alarm.response_budget_secs = Some(600);
    alarm.collection = CollectionMethod::Iot;
    let mut cctv = node(NodeSpec {
        id: "cctv-review",
        title: "Review CCTV crowd feeds",
        position: "duty-officer",
        boundary: "b-crowd",
        risk: Some("crowd"),
        cycle_days: Some(1),
        trigger: TriggerMethod::scheduled(),
        weight: 2.0,
    });
    cctv.collection = CollectionMethod::Iot;
    let mut handover = node(NodeSpec {
        id: "shift-handover",
        title: "Shift handover log",
        position: "duty-officer",
        boundary: "b-crowd",
        risk: None,
        cycle_days: Some(1),
        trigger: TriggerMethod::scheduled(),
        weight: 1.0,
    });
    handover.task_type = TaskType::Secondary;
    let wet = node(NodeSpec {
        id: "wet-floor-check",
        title: "Wet floor signage check",
        position: "patrol",
        boundary: "b-slip",
        risk: Some("slip"),
        cycle_days: Some(1),
        trigger: TriggerMethod::scheduled(),
        weight: 1.0,
    });
    security.nodes = vec![
        node(NodeSpec {
            id: "fire-inspection",
            title: "Fire equipment inspection",
            position: "patrol",
            boundary: "b-fire",
            risk: Some("fire"),
            cycle_days: Some(1),
            trigger: TriggerMethod::scheduled(),
            weight: 3.0,
        }),
        node(NodeSpec {
            id: "floor-patrol",
            title: "Floor patrol round",
            position: "patrol",
            boundary: "b-crowd",
            risk: Some("crowd"),
            cycle_days: Some(1),
            trigger: TriggerMethod::scheduled(),
            weight: 2.0,
        }),
        wet,
        alarm,
        cctv,
        handover,
    ];
    security.lists = vec![
        list(
            "l-patrol",
            "patrol",
            &["fire-inspection", "floor-patrol", "wet-floor-check"],
        ),
        list(
            "l-duty",
            "duty-officer",
            &["alarm-response", "cctv-review", "shift-handover"],
        ),
    ];

    let mut management = ResponsibilitySet::empty("set-management", "management");
    management.positions = vec![position(
        "manager",
        "Safety manager",
        "management",
        None,
        &["duty-officer"],
    )];
    management.boundaries = vec![
        boundary(
            "b-elec",
            "Electrical safety code 7",
            &["electrical"],
            &["electrical"],
            &[],
        ),
        boundary(
            "b-mgmt",
            "Mall safety management charter",
            &["crowd", "electrical"],
            &[],
            &[("crowd", Leadership), ("electrical", Leadership)],
        ),
    ];
    let mut meeting = node(NodeSpec {
        id: "safety-meeting",
        title: "Weekly safety meeting",
        position: "manager",
        boundary: "b-mgmt",
        risk: None,
        cycle_days: Some(7),
        trigger: TriggerMethod::scheduled(),
        weight: 1.0,
    });
    meeting.evaluation = EvaluationMethod::Voting;
    meeting.category = Leadership;
    meeting.consensus = Some("attendees vote on meeting quality".into());
    let mut review = node(NodeSpec {
        id: "incident-review",
        title: "Incident review",
        position: "manager",
        boundary: "b-mgmt",
        risk: None,
        cycle_days: None,
        trigger: TriggerMethod::manual(),
        weight: 1.0,
    });
    review.category = Leadership;
    management.nodes = vec![
        node(NodeSpec {
            id: "electrical-room-check",
            title: "Electrical room inspection",
            position: "manager",
            boundary: "b-elec",
            risk: Some("electrical"),
            cycle_days: Some(7),
            trigger: TriggerMethod::scheduled(),
            weight: 2.0,
        }),
        meeting,
        review,
    ];
    management.lists = vec![list(
        "l-manager",
        "manager",
        &["electrical-room-check", "safety-meeting", "incident-review"],
    )];

    Enterprise {
        enterprise_id: "mall".into(),
        name: "Riverside shopping mall".into(),
        utc_offset_minutes: UTC_OFFSET_MINUTES,
        risks: vec![
            risk(
                "fire",
                RiskLevel::Critical,
                "Fire in retail and storage areas",
            ),
            risk(
                "crowd",
                RiskLevel::Medium,
                "Crowding at entrances and escalators",
            ),
            risk("electrical", RiskLevel::High, "Electrical room faults"),
            risk("slip", RiskLevel::Low, "Slips on wet floors"),
        ],
        sets: vec![security, management],
    }
}

/// Scenario day on which the fire alarm goes off (Thursday of week two).
pub const FIRE_DAY: i64 = 10;
pub const FIRE_EVENT_ID: &str = "evt-fire-1";

pub fn fire_case_id() -> String {
    crate::ingest::case_id_for(FIRE_EVENT_ID)
}

fn fulfil(day: i64, hour: u32, node: &str, completion: f64, cycle_hours: i64) -> StreamRecord {
    let at = local(day, hour, 30);
    let window = local(day, 0, 0);
    StreamRecord::Fulfillment {
        at,
        record: FulfillmentSubmission {
            record_id: format!("f-{node}-d{day:02}"),
            node_id: node.into(),
            period_start: window.max(at - Duration::hours(1)),
            period_end: (window + Duration::hours(cycle_hours)).min(at + Duration::hours(1)),
            source: CollectionMethod::Manual,
            evidence: vec![format!("photo://{node}/{day}")],
            completion,
            extension_note: None,
            self_eval: None,
        },
    }
}

fn sensor(
    id: &str,
    device: &str,
    category: &str,
    severity: RiskLevel,
    at: DateTime<Utc>,
) -> StreamRecord {
    StreamRecord::Sensor(SensorEvent {
        event_id: id.into(),
        device_id: device.into(),
        category: category.into(),
        severity,
        observed_at: at,
        payload: None,
    })
}

/// Two weeks of activity, ordered by time, ending with a tick past the end
/// of week two.
pub fn events() -> Vec<StreamRecord> {
    let mut out = Vec::new();
    // patrol: uneven fire inspections, missed days
    let fire_inspection: BTreeMap<i64, f64> = [
        (0, 100.0),
        (1, 60.0),
        (3, 50.0),
        (4, 100.0),
        (6, 40.0),
        (7, 60.0),
        (8, 50.0),
        (10, 80.0),
        (11, 40.0),
        (13, 60.0),
    ]
    .into();
    for day in 0..14i64 {
        out.push(StreamRecord::Attendance {
            at: local(day, 7, 55),
            record: AttendanceSubmission {
                record_id: format!("att-duty-d{day:02}"),
                position_id: "duty-officer".into(),
                slot_start: local(day, 8, 0),
                attended: true,
            },
        });
        out.push(StreamRecord::Attendance {
            at: local(day, 7, 56),
            record: AttendanceSubmission {
                record_id: format!("att-patrol-d{day:02}"),
                position_id: "patrol".into(),
                slot_start: local(day, 8, 0),
                attended: !matches!(day, 2 | 5 | 9 | 12),
            },
        });
        if day % 7 < 5 {
            out.push(StreamRecord::Attendance {
                at: local(day, 8, 50),
                record: AttendanceSubmission {
                    record_id: format!("att-manager-d{day:02}"),
                    position_id: "manager".into(),
                    slot_start: local(day, 9, 0),
                    attended: day != 8,
                },
            });
        }
        out.push(fulfil(day, 8, "cctv-review", 100.0, 24));
        out.push(fulfil(
            day,
            9,
            "shift-handover",
            if day == 4 { 80.0 } else { 100.0 },
            24,
        ));
        if let Some(c) = fire_inspection.get(&day) {
            // the week-two inspection lands while the fire alarm is open
            let hour = if day == FIRE_DAY { 14 } else { 10 };
            let mut r = fulfil(day, hour, "fire-inspection", *c, 24);
            if day == FIRE_DAY {
                if let StreamRecord::Fulfillment { at, record } = &mut r {
                    *at = local(day, 14, 10);
                    record.period_start = local(day, 14, 0);
                    record.period_end = local(day, 14, 10);
                }
            }
            out.push(r);
        }
        if day % 2 == 0 {
            out.push(fulfil(day, 11, "floor-patrol", 70.0, 24));
        }
        if day % 3 == 0 {
            out.push(fulfil(day, 12, "wet-floor-check", 60.0, 24));
        }
        if day % 2 == 1 {
            out.push(sensor(
                &format!("evt-crowd-d{day:02}"),
                "cam-atrium",
                "crowd",
                RiskLevel::Medium,
                local(day, 13, 0),
            ));
        }
        // duty officer supervises the fire inspections
        let score = if day == 11 { 40.0 } else { 80.0 };
        out.push(StreamRecord::Supervision {
            at: local(day, 18, 0),
            record: SupervisionSubmission {
                record_id: format!("sup-fire-d{day:02}"),
                supervision_node_id: "sup-l-patrol".into(),
                supervised_node_id: "fire-inspection".into(),
                period_start: local(day, 17, 0),
                period_end: local(day, 18, 0),
                supervisory_score: score,
                supervisory_max: 100.0,
            },
        });
    }
    for week in 0..2i64 {
        let d = week * 7;
        out.push(fulfil(d + 1, 15, "electrical-room-check", 100.0, 24 * 7));
        out.push(fulfil(d + 2, 16, "safety-meeting", 90.0, 24 * 7));
        out.push(fulfil(d + 4, 16, "incident-review", 100.0, 24 * 7));
        out.push(StreamRecord::Supervision {
            at: local(d + 5, 17, 0),
            record: SupervisionSubmission {
                record_id: format!("sup-alarm-w{week}"),
                supervision_node_id: "sup-l-duty".into(),
                supervised_node_id: "alarm-response".into(),
                period_start: local(d + 5, 16, 0),
                period_end: local(d + 5, 17, 0),
                supervisory_score: 85.0,
                supervisory_max: 100.0,
            },
        });
        out.push(StreamRecord::Supervision {
            at: local(d + 5, 17, 30),
            record: SupervisionSubmission {
                record_id: format!("sup-elec-w{week}"),
                supervision_node_id: "sup-l-manager".into(),
                supervised_node_id: "electrical-room-check".into(),
                period_start: local(d + 5, 17, 0),
                period_end: local(d + 5, 17, 30),
                supervisory_score: 90.0,
                supervisory_max: 100.0,
            },
        });
        for (p, score) in [("duty-officer", 88.0), ("patrol", 55.0), ("manager", 90.0)] {
            out.push(StreamRecord::Assessment {
                at: local(d + 6, 10, 0),
                record: AssessmentSubmission {
                    record_id: format!("eval-{p}-w{week}"),
                    position_id: p.into(),
                    node_id: None,
                    method: EvaluationMethod::Evaluation,
                    assessor: "security-chief".into(),
                    score,
                    assessed_at: local(d + 6, 10, 0),
                },
            });
        }
        for (i, vote) in [80.0, 90.0, 100.0].into_iter().enumerate() {
            out.push(StreamRecord::Assessment {
                at: local(d + 2, 17, 0),
                record: AssessmentSubmission {
                    record_id: format!("vote-meeting-w{week}-{i}"),
                    position_id: "manager".into(),
                    node_id: Some("safety-meeting".into()),
                    method: EvaluationMethod::Voting,
                    assessor: format!("attendee-{i}"),
                    score: vote,
                    assessed_at: local(d + 2, 17, 0),
                },
            });
        }
    }
    out.push(sensor(
        "evt-elec-1",
        "panel-b2",
        "electrical",
        RiskLevel::Medium,
        local(3, 20, 15),
    ));
    out.push(sensor(
        FIRE_EVENT_ID,
        "smoke-l3-07",
        "fire",
        RiskLevel::Critical,
        local(FIRE_DAY, 14, 5),
    ));
    out.push(StreamRecord::AlarmAck {
        at: local(FIRE_DAY, 14, 6),
        case_id: fire_case_id(),
    });
    out.push(StreamRecord::AlarmHandling {
        at: local(FIRE_DAY, 14, 15),
        case_id: fire_case_id(),
        report: HandlingReport {
            notified_parties: ["patrol".into()].into(),
            processing_start: local(FIRE_DAY, 14, 6),
            processing_end: local(FIRE_DAY, 14, 14),
        },
    });
    out.push(StreamRecord::Tick {
        at: local(14, 0, 30),
    });
    out.sort_by_key(|r| r.at());
    out
}

pub fn events_jsonl() -> String {
    events().iter().map(|r| r.to_line() + "\n").collect()
}

pub fn enterprise_json() -> String {
    serde_json::to_string_pretty(&enterprise()).expect("enterprise serializes") + "\n"
}

/// The fire incident investigated after week two.
pub fn fire_incident() -> Incident {
    Incident {
        incident_id: "inc-fire-1".into(),
        occurred_at: local(FIRE_DAY, 14, 5),
        category: "fire".into(),
        severity: RiskLevel::Critical,
        description: "Smoke detected on level 3 near storage room".into(),
        related_node_ids: BTreeSet::new(),
    }
}

pub fn incident_json() -> String {
    serde_json::to_string_pretty(&fire_incident()).expect("incident serializes") + "\n"
}

/// Relative paths and contents of the committed fixture files.
pub fn fixture_files() -> Vec<(&'static str, String)> {
    vec![
        ("fixtures/shopping_mall.json", enterprise_json()),
        ("fixtures/shopping_mall_events.jsonl", events_jsonl()),
        ("fixtures/incident_fire.json", incident_json()),
    ]
}
