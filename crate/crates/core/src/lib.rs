//! Responsibility management engine.
//!
//! Positions own responsibility nodes grouped into lists. The engine tunes
//! task cycles by risk, generates supervision, reminds holders of open
//! tasks, scores positions per period and ranks them for accountability
//! after an incident. All state derives from an append-only event log.
//!
//! [`engine::Engine`] is the single writer; [`api::Service`] exposes it as
//! JSON request handling and [`http`] serves that over HTTP.

pub mod accountability;
pub mod api;
pub mod engine;
pub mod graph;
pub mod http;
pub mod ingest;
pub mod model;
pub mod notify;
pub mod period;
pub mod quantify;
pub mod reminder;
pub mod scenario;
pub mod scoring;
pub mod store;
pub mod stream;
