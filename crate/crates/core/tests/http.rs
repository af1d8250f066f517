mod common;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use responsibility_engine::api::Service;
use responsibility_engine::engine::EngineOptions;
use responsibility_engine::http::{router, Shared};
use responsibility_engine::scenario;

fn request(addr: std::net::SocketAddr, method: &str, target: &str, body: &str) -> (u16, String) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(
        s,
        "{method} {target} HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    let status = out[9..12].parse().unwrap();
    let body = out
        .split_once("\r\n\r\n")
        .map(|(_, b)| b.to_owned())
        .unwrap_or_default();
    (status, body)
}

#[test]
fn long_poll_wakes_on_new_entry() {
    let dir = tempfile::tempdir().unwrap();
    let engine = common::configured(dir.path(), scenario::enterprise(), EngineOptions::default());
    let since = engine.state().last_sequence;
    let shared =
        Shared::new(Service::new(engine).with_clock(Box::new(|| scenario::local(1, 12, 0))));
    let rt = tokio::runtime::Runtime::new().unwrap();
    let listener = rt
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .unwrap();
    let addr = listener.local_addr().unwrap();
    rt.spawn(async move { axum::serve(listener, router(shared)).await.unwrap() });

    let (status, body) = request(addr, "GET", "/health", "");
    assert_eq!(status, 200, "{body}");

    let started = Instant::now();
    let (status, _) = request(addr, "GET", &format!("/alarms?since={since}&wait=0.3"), "");
    assert_eq!(status, 200);
    assert!(started.elapsed() >= Duration::from_millis(250));

    let waiter = std::thread::spawn(move || {
        let started = Instant::now();
        let r = request(addr, "GET", &format!("/alarms?since={since}&wait=20"), "");
        (r, started.elapsed())
    });
    std::thread::sleep(Duration::from_millis(200));
    let event = serde_json::json!({
        "event_id": "e1", "device_id": "d", "category": "fire", "severity": "HIGH",
        "observed_at": scenario::local(1, 11, 0),
    });
    let (status, body) = request(addr, "POST", "/events", &event.to_string());
    assert_eq!(status, 200, "{body}");
    let ((status, body), waited) = waiter.join().unwrap();
    assert_eq!(status, 200);
    assert!(
        waited < Duration::from_secs(10),
        "long poll did not wake: {waited:?}"
    );
    let feed: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(feed["cases"][0]["case_id"], "case-e1");
}
