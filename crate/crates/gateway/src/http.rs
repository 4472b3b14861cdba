//! HTTP surface of the gateway.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use phyweb_core::adapt::{adapt, enrich_url, AdaptMode, Bindings};
use phyweb_core::fingerprint::{json_error_offset, parse_predicates, serialize_fingerprint, PredicateError};
use phyweb_core::scan::ScanPayload;
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

use crate::sim::{now_ms, SimBridge};
use crate::store::{EventMode, StateStore, Subscription};

pub const SEQ_HEADER: &str = "x-phyweb-seq";
pub const KEEPALIVE_INTERVAL: Duration = Duration::from_secs(15);

/// Shared handler state.
#[derive(Clone)]
pub struct AppState {
    pub store: Arc<StateStore>,
    pub bindings: Arc<Bindings>,
    pub sim: Option<Arc<SimBridge>>,
}

/// Endpoint list printed at startup.
pub const ENDPOINTS: &[&str] = &[
    "POST /api/v1/scan",
    "GET  /api/v1/networks",
    "GET  /api/v1/context",
    "GET  /api/v1/context.js?callback=NAME",
    "GET  /api/v1/events?mode=push|notify",
    "POST /api/v1/predicates",
    "GET  /api/v1/predicates",
    "POST /api/v1/adapt?mode=css|prune&report=0|1",
    "GET  /api/v1/enrich?url=U",
];

pub const SIM_ENDPOINTS: &[&str] = &["POST /api/v1/sim/position", "POST /api/v1/sim/ambient", "GET  /api/v1/sim/env"];

pub fn router(state: AppState) -> Router {
    let mut app = Router::new()
        .route("/api/v1/scan", post(post_scan))
        .route("/api/v1/networks", get(get_networks))
        .route("/api/v1/context", get(get_context))
        .route("/api/v1/context.js", get(get_context_js))
        .route("/api/v1/events", get(get_events))
        .route("/api/v1/predicates", get(get_predicates).post(post_predicates))
        .route("/api/v1/adapt", post(post_adapt))
        .route("/api/v1/enrich", get(get_enrich));
    if state.sim.is_some() {
        app = app
            .route("/api/v1/sim/position", post(post_sim_position))
            .route("/api/v1/sim/ambient", post(post_sim_ambient))
            .route("/api/v1/sim/env", get(get_sim_env));
    }
    app.with_state(state)
}

/// Serves `app` on an already bound listener until the future is dropped.
pub async fn serve(listener: TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}

/// Binds `addr` and serves in a background task; returns the bound address.
pub async fn spawn(addr: SocketAddr, app: Router) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    let handle = tokio::spawn(async move {
        if let Err(e) = serve(listener, app).await {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok((bound, handle))
}

fn error(status: StatusCode, message: impl Into<String>, offset: Option<usize>) -> Response {
    let mut body = json!({ "error": message.into() });
    if let Some(offset) = offset {
        body["offset"] = json!(offset);
    }
    (status, Json(body)).into_response()
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Response> {
    let text = std::str::from_utf8(body)
        .map_err(|e| error(StatusCode::BAD_REQUEST, "body is not UTF-8", Some(e.valid_up_to())))?;
    serde_json::from_str(text)
        .map_err(|e| error(StatusCode::BAD_REQUEST, e.to_string(), Some(json_error_offset(text, &e))))
}

fn seq_header(seq: u64) -> [(&'static str, HeaderValue); 1] {
    [(SEQ_HEADER, HeaderValue::from(seq))]
}

fn json_text(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

async fn post_scan(State(app): State<AppState>, body: Bytes) -> Response {
    let payload: ScanPayload = match parse_body(&body) {
        Ok(p) => p,
        Err(r) => return r,
    };
    match app.store.ingest(&payload) {
        Ok(r) => (StatusCode::NO_CONTENT, seq_header(r.seq)).into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), None),
    }
}

async fn get_networks(State(app): State<AppState>) -> Response {
    json_text(serialize_fingerprint(&app.store.networks()))
}

async fn get_context(State(app): State<AppState>) -> Response {
    let snap = app.store.snapshot();
    let text = serde_json::to_string(&*snap).expect("context state serializes");
    (seq_header(snap.seq), json_text(text)).into_response()
}

/// Whether `name` is a plain JavaScript identifier.
pub fn valid_callback_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_' || c == '$')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

/// `name(<json>);` with the JSON made safe to embed in a script element.
pub fn callback_script(name: &str, state_json: &str) -> Option<String> {
    if !valid_callback_name(name) {
        return None;
    }
    let safe = state_json.replace("</", "<\\/").replace('\u{2028}', "\\u2028").replace('\u{2029}', "\\u2029");
    Some(format!("{name}({safe});"))
}

#[derive(Deserialize)]
struct CallbackQuery {
    callback: Option<String>,
}

async fn get_context_js(State(app): State<AppState>, Query(q): Query<CallbackQuery>) -> Response {
    let Some(name) = q.callback else {
        return error(StatusCode::BAD_REQUEST, "missing callback parameter", None);
    };
    let snap = app.store.snapshot();
    let json = serde_json::to_string(&*snap).expect("context state serializes");
    match callback_script(&name, &json) {
        Some(script) => {
            ([(header::CONTENT_TYPE, "application/javascript; charset=utf-8")], seq_header(snap.seq), script).into_response()
        }
        None => error(StatusCode::BAD_REQUEST, format!("invalid callback name {name:?}"), None),
    }
}

#[derive(Deserialize)]
struct EventsQuery {
    mode: Option<String>,
}

fn event_stream(sub: Subscription) -> impl Stream<Item = Result<Event, Infallible>> {
    futures::stream::unfold(sub, |mut sub| async move {
        let event = match sub.next().await? {
            Ok(frame) => {
                Event::default().event(frame.mode.event_name()).id(frame.seq.to_string()).data(frame.payload_json())
            }
            Err(_) => Event::default().event("disconnect").data(r#"{"reason":"lagged"}"#),
        };
        Some((Ok(event), sub))
    })
}

async fn get_events(State(app): State<AppState>, Query(q): Query<EventsQuery>) -> Response {
    let mode = match q.mode.as_deref() {
        None => EventMode::Push,
        Some(m) => match EventMode::parse(m) {
            Some(mode) => mode,
            None => return error(StatusCode::BAD_REQUEST, format!("unknown mode {m:?}"), None),
        },
    };
    let sub = app.store.subscribe(mode);
    Sse::new(event_stream(sub)).keep_alive(KeepAlive::new().interval(KEEPALIVE_INTERVAL)).into_response()
}

async fn get_predicates(State(app): State<AppState>) -> Response {
    Json(app.store.predicates()).into_response()
}

async fn post_predicates(State(app): State<AppState>, body: Bytes) -> Response {
    let Ok(text) = std::str::from_utf8(&body) else {
        return error(StatusCode::BAD_REQUEST, "body is not UTF-8", None);
    };
    let predicates = match parse_predicates(text) {
        Ok(p) => p,
        Err(PredicateError::Json { offset, message }) => return error(StatusCode::BAD_REQUEST, message, Some(offset)),
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), None),
    };
    match app.store.set_predicates(predicates) {
        Ok(r) => (StatusCode::NO_CONTENT, seq_header(r.seq)).into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), None),
    }
}

#[derive(Deserialize)]
struct AdaptQuery {
    mode: Option<String>,
    report: Option<String>,
}

async fn post_adapt(State(app): State<AppState>, Query(q): Query<AdaptQuery>, body: Bytes) -> Response {
    let mode = match q.mode.as_deref().map(str::parse::<AdaptMode>) {
        None => AdaptMode::Css,
        Some(Ok(m)) => m,
        Some(Err(_)) => return error(StatusCode::BAD_REQUEST, "mode must be css or prune", None),
    };
    let with_report = match q.report.as_deref() {
        None | Some("0") | Some("false") => false,
        Some("1") | Some("true") => true,
        Some(other) => return error(StatusCode::BAD_REQUEST, format!("report must be 0 or 1, got {other:?}"), None),
    };
    let Ok(html) = std::str::from_utf8(&body) else {
        return error(StatusCode::BAD_REQUEST, "body is not UTF-8", None);
    };
    let snap = app.store.snapshot();
    match adapt(html, &snap, &snap.networks, mode, &app.bindings) {
        Ok((out, report)) if with_report => Json(json!({ "html": out, "report": report })).into_response(),
        Ok((out, _)) => ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], seq_header(snap.seq), out).into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string(), Some(e.offset())),
    }
}

#[derive(Deserialize)]
struct EnrichQuery {
    url: Option<String>,
}

async fn get_enrich(State(app): State<AppState>, Query(q): Query<EnrichQuery>) -> Response {
    let Some(url) = q.url else {
        return error(StatusCode::BAD_REQUEST, "missing url parameter", None);
    };
    let enriched = enrich_url(&url, &app.store.snapshot());
    if !enriched.parsed {
        return error(StatusCode::UNPROCESSABLE_ENTITY, format!("not a URL: {url:?}"), None);
    }
    Json(json!({ "url": enriched.url })).into_response()
}

fn sim_of(app: &AppState) -> &Arc<SimBridge> {
    app.sim.as_ref().expect("sim routes are mounted only with a bridge")
}

#[derive(Deserialize)]
struct Position {
    x: f64,
    y: f64,
}

async fn post_sim_position(State(app): State<AppState>, body: Bytes) -> Response {
    let p: Position = match parse_body(&body) {
        Ok(p) => p,
        Err(r) => return r,
    };
    if !(p.x.is_finite() && p.y.is_finite()) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "coordinates must be finite", None);
    }
    let sim = sim_of(&app);
    let now = now_ms();
    let view = sim.set_position(p.x, p.y, now);
    let seq = sim.emit(&app.store, now);
    (seq_header(seq), Json(view)).into_response()
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct AmbientUpdate {
    lux: Option<f64>,
    audio_rms: Option<f64>,
}

async fn post_sim_ambient(State(app): State<AppState>, body: Bytes) -> Response {
    let a: AmbientUpdate = match parse_body(&body) {
        Ok(a) => a,
        Err(r) => return r,
    };
    if a.lux.is_some_and(|l| !(l >= 0.0 && l.is_finite())) || a.audio_rms.is_some_and(|r| !(r >= 0.0 && r.is_finite())) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "lux and audioRms must be finite and non-negative", None);
    }
    let sim = sim_of(&app);
    let now = now_ms();
    let view = sim.set_ambient(a.lux, a.audio_rms, now);
    let seq = sim.emit(&app.store, now);
    (seq_header(seq), Json(view)).into_response()
}

async fn get_sim_env(State(app): State<AppState>) -> Response {
    let sim = sim_of(&app);
    let mut body = serde_json::to_value(sim.environment()).expect("environment serializes");
    body["device"] = serde_json::to_value(sim.device(now_ms())).expect("device serializes");
    body["intervalMs"] = json!(sim.interval_ms());
    Json(body).into_response()
}
