//! Axum adapter around [`Service`].
//!
//! Every request is forwarded to [`Service::handle`]. `GET /alarms` accepts
//! `wait=<seconds>` and blocks until a newer entry exists or the wait ends.
//! A background task ticks the engine on a fixed interval.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderMap, Method, StatusCode, Uri};
use axum::response::IntoResponse;
use axum::Router;
use tokio::sync::Notify;

use crate::api::{Response, Service};

/// Longest accepted long-poll wait.
pub const MAX_WAIT: Duration = Duration::from_secs(60);

#[derive(Clone)]
pub struct Shared {
    service: Arc<Mutex<Service>>,
    changed: Arc<Notify>,
}

impl Shared {
    pub fn new(service: Service) -> Self {
        Self {
            service: Arc::new(Mutex::new(service)),
            changed: Arc::new(Notify::new()),
        }
    }

    fn last_sequence(&self) -> u64 {
        self.service
            .lock()
            .expect("service lock")
            .engine()
            .state()
            .last_sequence
    }

    /// Handles a request synchronously and wakes long-pollers on change.
    pub fn call(&self, method: &str, target: &str, body: &[u8], auth: Option<&str>) -> Response {
        let mut svc = self.service.lock().expect("service lock");
        let before = svc.engine().state().last_sequence;
        let response = svc.handle(method, target, body, auth);
        if svc.engine().state().last_sequence != before {
            self.changed.notify_waiters();
        }
        response
    }

    pub fn tick(&self) {
        let mut svc = self.service.lock().expect("service lock");
        let before = svc.engine().state().last_sequence;
        if let Err(e) = svc.tick() {
            eprintln!("tick failed: {e}");
        }
        if svc.engine().state().last_sequence != before {
            self.changed.notify_waiters();
        }
    }
}

fn wait_param(uri: &Uri) -> Option<(u64, Duration)> {
    if uri.path().trim_end_matches('/') != "/alarms" {
        return None;
    }
    let mut since = 0;
    let mut wait = None;
    for (k, v) in form_urlencoded::parse(uri.query()?.as_bytes()) {
        match k.as_ref() {
            "since" => since = v.parse().ok()?,
            "wait" => wait = v.parse::<f64>().ok().filter(|w| w.is_finite() && *w > 0.0),
            _ => {}
        }
    }
    Some((since, Duration::from_secs_f64(wait?).min(MAX_WAIT)))
}

async fn dispatch(
    State(shared): State<Shared>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> impl IntoResponse {
    if method == Method::GET {
        if let Some((since, wait)) = wait_param(&uri) {
            let deadline = tokio::time::Instant::now() + wait;
            loop {
                let notified = shared.changed.notified();
                if shared.last_sequence() > since {
                    break;
                }
                if tokio::time::timeout_at(deadline, notified).await.is_err() {
                    break;
                }
            }
        }
    }
    let target = uri
        .path_and_query()
        .map_or(uri.path(), |pq| pq.as_str())
        .to_owned();
    let auth = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .map(str::to_owned);
    let r = shared.call(method.as_str(), &target, &body, auth.as_deref());
    let status = StatusCode::from_u16(r.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (status, [(header::CONTENT_TYPE, "application/json")], r.body)
}

pub fn router(shared: Shared) -> Router {
    Router::new().fallback(dispatch).with_state(shared)
}

/// Serves until ctrl-c, ticking every `tick_every`.
pub async fn serve(
    service: Service,
    addr: SocketAddr,
    tick_every: Duration,
) -> std::io::Result<()> {
    let shared = Shared::new(service);
    let ticker = shared.clone();
    let tick_task = tokio::spawn(async move {
        let mut interval = tokio::time::interval(tick_every);
        loop {
            interval.tick().await;
            let t = ticker.clone();
            if tokio::task::spawn_blocking(move || t.tick()).await.is_err() {
                break;
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    let result = axum::serve(listener, router(shared))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    tick_task.abort();
    result
}
