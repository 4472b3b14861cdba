//! Minimal SSE reader and gateway fixtures for integration tests.
#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use futures::StreamExt;
use phyweb_core::adapt::Bindings;
use phyweb_core::context::Thresholds;
use phyweb_core::fingerprint::ProximityPredicate;
use phyweb_gateway::{Gateway, RunningGateway, StateStore};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SseEvent {
    pub event: String,
    pub id: Option<String>,
    pub data: String,
}

pub struct SseReader {
    stream: std::pin::Pin<Box<dyn futures::Stream<Item = reqwest::Result<axum::body::Bytes>> + Send>>,
    buf: String,
}

impl SseReader {
    pub async fn open(base: &str, mode: &str) -> SseReader {
        let resp = reqwest::get(format!("{base}/api/v1/events?mode={mode}")).await.expect("connect");
        assert_eq!(resp.status(), 200);
        let ct = resp.headers()["content-type"].to_str().unwrap().to_string();
        assert!(ct.starts_with("text/event-stream"), "{ct}");
        SseReader { stream: Box::pin(resp.bytes_stream()), buf: String::new() }
    }

    fn take_event(&mut self) -> Option<Option<SseEvent>> {
        let end = self.buf.find("\n\n")?;
        let block: String = self.buf.drain(..end + 2).collect();
        let mut ev = SseEvent { event: "message".into(), ..Default::default() };
        let mut data = Vec::new();
        let mut any_field = false;
        for line in block.lines() {
            if line.is_empty() || line.starts_with(':') {
                continue;
            }
            let (field, value) = line.split_once(':').unwrap_or((line, ""));
            let value = value.strip_prefix(' ').unwrap_or(value);
            any_field = true;
            match field {
                "event" => ev.event = value.to_string(),
                "id" => ev.id = Some(value.to_string()),
                "data" => data.push(value.to_string()),
                _ => {}
            }
        }
        ev.data = data.join("\n");
        Some(any_field.then_some(ev))
    }

    /// Next event, skipping keep-alive comments; `None` at end of stream or timeout.
    pub async fn next(&mut self, timeout: Duration) -> Option<SseEvent> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            while let Some(parsed) = self.take_event() {
                if let Some(ev) = parsed {
                    return Some(ev);
                }
            }
            let chunk = tokio::time::timeout_at(deadline, self.stream.next()).await.ok()??.ok()?;
            self.buf.push_str(&String::from_utf8_lossy(&chunk).replace("\r\n", "\n"));
        }
    }
}

/// Serves a fresh gateway on an ephemeral localhost port.
pub async fn start(predicates: Vec<ProximityPredicate>, bindings: Bindings) -> (Gateway, RunningGateway) {
    let store = StateStore::new(Thresholds::default(), predicates);
    let gw = Gateway::new(store, bindings, None);
    let addr: SocketAddr = "127.0.0.1:0".parse().unwrap();
    let running = gw.start(addr).await.unwrap();
    (gw, running)
}
