//! Authoritative context state, change detection, and event fan-out.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use phyweb_core::context::{build_context, ContextState, SensorWindow, Thresholds, TrackedPredicate};
use phyweb_core::fingerprint::{Fingerprint, MatchState, ProximityPredicate};
use phyweb_core::scan::{PayloadError, ScanPayload};
use serde::Serialize;
use tokio::sync::mpsc;

/// Frames buffered per subscriber before it is dropped as too slow.
pub const DEFAULT_SUBSCRIBER_BUFFER: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EventMode {
    Push,
    Notify,
}

impl EventMode {
    pub fn parse(text: &str) -> Option<Self> {
        match text.to_ascii_lowercase().as_str() {
            "push" => Some(EventMode::Push),
            "notify" => Some(EventMode::Notify),
            _ => None,
        }
    }

    /// SSE event name.
    pub fn event_name(self) -> &'static str {
        match self {
            EventMode::Push => "context",
            EventMode::Notify => "available",
        }
    }
}

/// One published state as seen by a subscriber.
#[derive(Debug, Clone)]
pub struct EventFrame {
    pub mode: EventMode,
    pub seq: u64,
    pub state: Arc<ContextState>,
}

impl EventFrame {
    /// Full state JSON in push mode, `{"seq":N}` in notify mode.
    pub fn payload_json(&self) -> String {
        match self.mode {
            EventMode::Push => serde_json::to_string(&*self.state).expect("context state serializes"),
            EventMode::Notify => format!("{{\"seq\":{}}}", self.seq),
        }
    }
}

/// The subscriber fell behind by more than its buffer and was dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lagged;

/// Ordered frames for one subscriber. After a lag disconnect the buffered
/// frames are still delivered, followed by a single `Err(Lagged)`.
pub struct Subscription {
    rx: mpsc::Receiver<EventFrame>,
    lagged: Arc<AtomicBool>,
    finished: bool,
}

impl Subscription {
    pub async fn next(&mut self) -> Option<Result<EventFrame, Lagged>> {
        if self.finished {
            return None;
        }
        match self.rx.recv().await {
            Some(frame) => Some(Ok(frame)),
            None => {
                self.finished = true;
                self.lagged.load(Ordering::Acquire).then_some(Err(Lagged))
            }
        }
    }

    /// Non-blocking variant of [`Subscription::next`]; `None` means nothing is ready yet.
    pub fn try_next(&mut self) -> Option<Result<EventFrame, Lagged>> {
        if self.finished {
            return None;
        }
        match self.rx.try_recv() {
            Ok(frame) => Some(Ok(frame)),
            Err(mpsc::error::TryRecvError::Empty) => None,
            Err(mpsc::error::TryRecvError::Disconnected) => {
                self.finished = true;
                self.lagged.load(Ordering::Acquire).then_some(Err(Lagged))
            }
        }
    }
}

struct Subscriber {
    mode: EventMode,
    tx: mpsc::Sender<EventFrame>,
    lagged: Arc<AtomicBool>,
}

struct Inner {
    window: SensorWindow,
    networks: Fingerprint,
    tracked: Vec<TrackedPredicate>,
    published: Arc<ContextState>,
    subscribers: Vec<Subscriber>,
}

/// Result of one ingest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Ingested {
    pub seq: u64,
    pub published: bool,
}

/// Rejected predicate replacement.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("duplicate predicate id {0:?}")]
pub struct DuplicatePredicate(pub String);

/// Serializes ingest and predicate changes under one lock; readers get
/// shared immutable snapshots.
pub struct StateStore {
    thresholds: Thresholds,
    buffer: usize,
    inner: Mutex<Inner>,
}

/// Whether `next` differs from `prev` enough to be published.
pub fn material_change(prev: &ContextState, next: &ContextState) -> bool {
    let noise_moved = match (prev.noise_db, next.noise_db) {
        (Some(a), Some(b)) => (a - b).abs() > 1.0,
        (None, None) => false,
        _ => true,
    };
    prev.movement != next.movement
        || prev.noise != next.noise
        || prev.light != next.light
        || prev.stable_surface != next.stable_surface
        || prev.rotating != next.rotating
        || prev.zones != next.zones
        || prev.networks.node_keys() != next.networks.node_keys()
        || noise_moved
}

impl StateStore {
    pub fn new(thresholds: Thresholds, predicates: Vec<ProximityPredicate>) -> Self {
        Self::with_buffer(thresholds, predicates, DEFAULT_SUBSCRIBER_BUFFER)
    }

    pub fn with_buffer(thresholds: Thresholds, predicates: Vec<ProximityPredicate>, buffer: usize) -> Self {
        let tracked: Vec<TrackedPredicate> = predicates.into_iter().map(TrackedPredicate::new).collect();
        let initial = ContextState { zones: zones_of(&tracked), ..Default::default() };
        StateStore {
            inner: Mutex::new(Inner {
                window: SensorWindow::new(thresholds.window_ms),
                networks: Fingerprint::empty(),
                tracked,
                published: Arc::new(initial),
                subscribers: Vec::new(),
            }),
            thresholds,
            buffer: buffer.max(1),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    /// Latest published state.
    pub fn snapshot(&self) -> Arc<ContextState> {
        self.lock().published.clone()
    }

    /// Most recently ingested fingerprint, which may carry fresher RSSI
    /// values than the published state.
    pub fn networks(&self) -> Fingerprint {
        self.lock().networks.clone()
    }

    pub fn predicates(&self) -> Vec<ProximityPredicate> {
        self.lock().tracked.iter().map(|t| t.predicate.clone()).collect()
    }

    pub fn match_states(&self) -> BTreeMap<String, MatchState> {
        self.lock().tracked.iter().map(|t| (t.predicate.id.clone(), t.state)).collect()
    }

    pub fn subscriber_count(&self) -> usize {
        self.lock().subscribers.len()
    }

    /// Merges a scan and publishes the rebuilt state if it changed materially.
    /// Hysteresis only advances on payloads that carry a fingerprint.
    pub fn ingest(&self, payload: &ScanPayload) -> Result<Ingested, PayloadError> {
        payload.validate()?;
        let mut inner = self.lock();
        let inner = &mut *inner;
        if let Some(sensors) = &payload.sensors {
            inner.window.extend(sensors.samples());
        }
        let prev_seq = inner.published.seq;
        let candidate = match &payload.fingerprint {
            Some(fp) => {
                inner.networks = fp.clone();
                build_context(&inner.window, &inner.networks, &mut inner.tracked, prev_seq, &self.thresholds)
            }
            None => {
                let mut s = build_context(&inner.window, &inner.networks, &mut [], prev_seq, &self.thresholds);
                s.zones = zones_of(&inner.tracked);
                s
            }
        };
        Ok(self.offer(inner, candidate))
    }

    /// Replaces the predicate set. Predicates that are unchanged keep their
    /// match state; new or edited ones start unmatched.
    pub fn set_predicates(&self, predicates: Vec<ProximityPredicate>) -> Result<Ingested, DuplicatePredicate> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &predicates {
            if !seen.insert(p.id.as_str()) {
                return Err(DuplicatePredicate(p.id.clone()));
            }
        }
        let mut inner = self.lock();
        let inner = &mut *inner;
        let tracked = predicates
            .into_iter()
            .map(|p| {
                let state = inner
                    .tracked
                    .iter()
                    .find(|t| t.predicate == p)
                    .map_or_else(MatchState::default, |t| t.state);
                TrackedPredicate { predicate: p, state }
            })
            .collect();
        inner.tracked = tracked;
        let mut candidate = (*inner.published).clone();
        candidate.seq += 1;
        candidate.zones = zones_of(&inner.tracked);
        Ok(self.offer(inner, candidate))
    }

    fn offer(&self, inner: &mut Inner, candidate: ContextState) -> Ingested {
        if !material_change(&inner.published, &candidate) {
            return Ingested { seq: inner.published.seq, published: false };
        }
        let state = Arc::new(candidate);
        inner.published = state.clone();
        let seq = state.seq;
        inner.subscribers.retain(|sub| {
            let frame = EventFrame { mode: sub.mode, seq, state: state.clone() };
            match sub.tx.try_send(frame) {
                Ok(()) => true,
                Err(mpsc::error::TrySendError::Full(_)) => {
                    sub.lagged.store(true, Ordering::Release);
                    false
                }
                Err(mpsc::error::TrySendError::Closed(_)) => false,
            }
        });
        Ingested { seq, published: true }
    }

    /// Registers a subscriber. The first frame carries the current state;
    /// later frames follow every publish in order.
    pub fn subscribe(&self, mode: EventMode) -> Subscription {
        let (tx, rx) = mpsc::channel(self.buffer);
        let lagged = Arc::new(AtomicBool::new(false));
        let mut inner = self.lock();
        let state = inner.published.clone();
        tx.try_send(EventFrame { mode, seq: state.seq, state }).expect("fresh channel has room");
        inner.subscribers.push(Subscriber { mode, tx, lagged: lagged.clone() });
        Subscription { rx, lagged, finished: false }
    }
}

fn zones_of(tracked: &[TrackedPredicate]) -> BTreeMap<String, bool> {
    tracked.iter().map(|t| (t.predicate.id.clone(), t.state.matched)).collect()
}
