//! HTTP/JSON request handling, independent of any server framework.
//!
//! [`Service::handle`] maps a method, request target and body to a status
//! and JSON body. Reads never mutate; every mutation goes through the
//! engine's log.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use percent_encoding::percent_decode_str;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::accountability::Incident;
use crate::engine::{
    AssessmentSubmission, AttendanceSubmission, ConfigSubmission, Engine, EngineError,
    FulfillmentSubmission, SupervisionSubmission,
};
use crate::ingest::{HandlingReport, SensorEvent};
use crate::model::PositionId;
use crate::period::Period;
use crate::store::StoreError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub body: String,
}

impl Response {
    fn ok<T: Serialize>(value: &T) -> Self {
        Self {
            status: 200,
            body: serde_json::to_string(value).expect("response serializes"),
        }
    }

    fn error(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({"error": code, "message": message.into()}).to_string(),
        }
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_str(&self.body).unwrap_or(serde_json::Value::Null)
    }
}

impl From<EngineError> for Response {
    fn from(e: EngineError) -> Self {
        let msg = e.to_string();
        match e {
            EngineError::Store(StoreError::CorruptLog { .. }) | EngineError::Store(_) => Response::error(503, "storage_failure", msg),
            EngineError::NotConfigured => Response::error(404, "not_configured", msg),
            EngineError::Invalid(_) | EngineError::Quantify(_) | EngineError::Graph(_) => Response::error(400, "invalid", msg),
            EngineError::InvalidConfiguration(report) => Response {
                status: 400,
                body: json!({"error": "invalid_configuration", "message": msg, "violations": report.violations}).to_string(),
            },
            EngineError::NotFound(_) => Response::error(404, "not_found", msg),
            EngineError::Conflict(_) => Response::error(409, "conflict", msg),
            EngineError::StaleVersion { .. } => Response::error(409, "stale_version", msg),
        }
    }
}

/// Clock used for live requests.
pub type Clock = Box<dyn Fn() -> DateTime<Utc> + Send>;

pub struct Service {
    engine: Engine,
    token: Option<String>,
    clock: Clock,
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| Response::error(400, "malformed", e.to_string()))
}

fn parse_period(query: &BTreeMap<String, String>) -> Result<Option<Period>, Response> {
    query
        .get("period")
        .map(|p| {
            p.parse::<Period>()
                .map_err(|e| Response::error(400, "malformed", e.to_string()))
        })
        .transpose()
}

impl Service {
    pub fn new(engine: Engine) -> Self {
        Self {
            engine,
            token: None,
            clock: Box::new(Utc::now),
        }
    }

    /// Requires `Authorization: Bearer <token>` on mutations.
    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut Engine {
        &mut self.engine
    }

    pub fn into_engine(self) -> Engine {
        self.engine
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    /// Runs the background duties at the current time.
    pub fn tick(&mut self) -> Result<crate::engine::TickOutcome, EngineError> {
        let now = self.now();
        self.engine.tick(now)
    }

    /// Handles one request. `target` is the path plus optional query
    /// string; `authorization` is the raw header value, if any.
    pub fn handle(
        &mut self,
        method: &str,
        target: &str,
        body: &[u8],
        authorization: Option<&str>,
    ) -> Response {
        let (path, query) = target.split_once('?').unwrap_or((target, ""));
        let query: BTreeMap<String, String> = form_urlencoded::parse(query.as_bytes())
            .into_owned()
            .collect();
        let segments: Vec<String> = path
            .trim_matches('/')
            .split('/')
            .filter(|s| !s.is_empty())
            .map(|s| percent_decode_str(s).decode_utf8_lossy().into_owned())
            .collect();
        let segs: Vec<&str> = segments.iter().map(String::as_str).collect();
        let result = match method {
            "GET" => self.read(&segs, &query),
            "POST" => {
                if let Some(token) = &self.token {
                    let expected = format!("Bearer {token}");
                    if authorization != Some(expected.as_str()) {
                        return Response::error(
                            401,
                            "unauthorized",
                            "missing or wrong bearer token",
                        );
                    }
                }
                self.write(&segs, body)
            }
            _ => Err(Response::error(
                405,
                "method_not_allowed",
                method.to_owned(),
            )),
        };
        result.unwrap_or_else(|r| r)
    }

    fn read(&self, segs: &[&str], query: &BTreeMap<String, String>) -> Result<Response, Response> {
        let state = self.engine.state();
        let response = match segs {
            ["health"] => Response::ok(
                &json!({"last_sequence": state.last_sequence, "version": state.version()}),
            ),
            ["config"] => match &state.config {
                Some(c) => Response::ok(c),
                None => return Err(EngineError::NotConfigured.into()),
            },
            ["positions", id, "lists"] => {
                let position = PositionId::from(*id);
                let ent = state.effective().ok_or(EngineError::NotConfigured)?;
                let lists = state.position_lists(&position)?;
                let body: Vec<serde_json::Value> = lists
                    .into_iter()
                    .map(|l| {
                        let nodes: Vec<_> = l.items.iter().filter_map(|i| ent.node(i)).collect();
                        json!({"list": l, "nodes": nodes})
                    })
                    .collect();
                Response::ok(&json!({"position_id": position, "lists": body}))
            }
            ["positions", id, "score"] => {
                Response::ok(&state.score(&PositionId::from(*id), parse_period(query)?)?)
            }
            ["positions", id, "series"] => {
                let position = PositionId::from(*id);
                Response::ok(&json!({"position_id": position, "series": state.series(&position)?}))
            }
            ["rankings"] => {
                let period = parse_period(query)?.ok_or_else(|| {
                    Response::error(400, "malformed", "period query parameter is required")
                })?;
                Response::ok(state.rankings(period)?)
            }
            ["reminders"] => {
                let part = state.reminders();
                Response::ok(&json!({"now": state.clock, "queue": part.queue, "quiet": part.quiet}))
            }
            ["graph"] => match state.derived() {
                Some(d) => Response::ok(&d.dag),
                None => return Err(EngineError::NotConfigured.into()),
            },
            ["quantification"] => match state.derived() {
                Some(d) => Response::ok(&d.quantification),
                None => return Err(EngineError::NotConfigured.into()),
            },
            ["alarms"] => {
                let since = match query.get("since") {
                    Some(s) => s
                        .parse::<u64>()
                        .map_err(|e| Response::error(400, "malformed", format!("since: {e}")))?,
                    None => 0,
                };
                Response::ok(&state.alarm_feed(since))
            }
            ["alarms", id] => match state.alarms.get(*id) {
                Some(c) => Response::ok(c),
                None => return Err(EngineError::NotFound(format!("alarm case {id}")).into()),
            },
            ["incidents", id, "report"] => Response::ok(&state.incident_report(id)?),
            _ => {
                return Err(Response::error(
                    404,
                    "not_found",
                    format!("no route for GET /{}", segs.join("/")),
                ))
            }
        };
        Ok(response)
    }

    fn write(&mut self, segs: &[&str], body: &[u8]) -> Result<Response, Response> {
        let now = self.now();
        let engine = &mut self.engine;
        let response = match segs {
            ["config"] => {
                let sub: ConfigSubmission = parse_body(body)?;
                let receipt = engine.submit_config(sub, now)?;
                Response::ok(&json!({"receipt": receipt, "version": engine.state().version()}))
            }
            ["events"] => {
                Response::ok(&engine.ingest_event(parse_body::<SensorEvent>(body)?, now)?)
            }
            ["fulfillments"] => Response::ok(
                &engine.submit_fulfillment(parse_body::<FulfillmentSubmission>(body)?, now)?,
            ),
            ["supervisions"] => Response::ok(
                &engine.submit_supervision(parse_body::<SupervisionSubmission>(body)?, now)?,
            ),
            ["attendance"] => Response::ok(
                &engine.submit_attendance(parse_body::<AttendanceSubmission>(body)?, now)?,
            ),
            ["assessments"] => Response::ok(
                &engine.submit_assessment(parse_body::<AssessmentSubmission>(body)?, now)?,
            ),
            ["alarms", id, "ack"] => Response::ok(&engine.acknowledge_alarm(id, now)?),
            ["alarms", id, "handling"] => Response::ok(&engine.record_handling(
                id,
                parse_body::<HandlingReport>(body)?,
                now,
            )?),
            ["incidents"] => {
                Response::ok(&engine.submit_incident(parse_body::<Incident>(body)?, now)?)
            }
            ["periods", p, "close"] => {
                let period: Period = p.parse().map_err(|e: crate::period::PeriodParseError| {
                    Response::error(400, "malformed", e.to_string())
                })?;
                Response::ok(&engine.close_period(period, now)?.rankings)
            }
            _ => {
                return Err(Response::error(
                    404,
                    "not_found",
                    format!("no route for POST /{}", segs.join("/")),
                ))
            }
        };
        Ok(response)
    }
}
