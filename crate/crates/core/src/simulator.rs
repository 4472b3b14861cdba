//! Deterministic stand-in for a phone: beacon layout, device trace, and the
//! scans a device would report along it.
//!
//! Radio signal strength follows the log-distance model with optional
//! gaussian shadowing; all randomness flows through a seeded [`SimRng`].

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{AccelSample, AudioSample, GpsSample, LightSample, OrientSample};
use crate::fingerprint::{Fingerprint, Mac, NetworkKind, NetworkObservation, RSSI_MAX, RSSI_MIN};
use crate::num::{euclidean, Real, EARTH_RADIUS_M};
use crate::scan::{ScanPayload, SensorBatch};

pub const GRAVITY_MPS2: f64 = 9.81;
/// Accelerometer readings emitted per synthesized scan.
pub const ACCEL_SAMPLES_PER_SCAN: u64 = 5;
const ACCEL_SPACING_MS: u64 = 100;

/// Log-distance path-loss model: `rssi(d) = tx − 10·n·log10(max(d, 1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDistance<T> {
    /// Received power at the 1 m reference distance.
    pub tx_power_dbm: T,
    pub exponent: T,
}

impl<T: Real> LogDistance<T> {
    pub fn new(tx_power_dbm: T, exponent: T) -> Self {
        LogDistance { tx_power_dbm, exponent }
    }

    pub fn mean_rssi(&self, distance_m: T) -> T {
        let d = distance_m.max(T::one());
        self.tx_power_dbm - T::lit(10.0) * self.exponent * d.log10()
    }

    /// Distance at which the mean RSSI falls to `rssi_dbm` (at least 1 m).
    pub fn distance_for(&self, rssi_dbm: T) -> T {
        let d = T::lit(10.0).powf((self.tx_power_dbm - rssi_dbm) / (T::lit(10.0) * self.exponent));
        d.max(T::one())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BeaconNode {
    pub mac: Mac,
    #[serde(default)]
    pub ssid: String,
    #[serde(default)]
    pub kind: NetworkKind,
    /// Position in meters.
    pub pos: [f64; 2],
    pub tx_power_dbm: f64,
    #[serde(default = "default_exponent")]
    pub path_loss_exponent: f64,
}

fn default_exponent() -> f64 {
    2.5
}

impl BeaconNode {
    pub fn model(&self) -> LogDistance<f64> {
        LogDistance::new(self.tx_power_dbm, self.path_loss_exponent)
    }
}

/// Reference point mapping the planar simulation frame onto WGS84.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoOrigin {
    pub lat: f64,
    pub lon: f64,
}

impl Default for GeoOrigin {
    fn default() -> Self {
        GeoOrigin { lat: 45.4642, lon: 9.19 }
    }
}

impl GeoOrigin {
    /// Equirectangular projection of a local (x east, y north) offset.
    pub fn to_lat_lon(&self, pos: (f64, f64)) -> (f64, f64) {
        let lat = self.lat + (pos.1 / EARTH_RADIUS_M).to_degrees();
        let lon = self.lon + (pos.0 / (EARTH_RADIUS_M * self.lat.to_radians().cos())).to_degrees();
        (lat, lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Environment {
    pub nodes: Vec<BeaconNode>,
    #[serde(default = "default_sigma")]
    pub noise_sigma_db: f64,
    #[serde(default = "default_floor")]
    pub detect_floor_dbm: f64,
    #[serde(default)]
    pub origin: GeoOrigin,
}

fn default_sigma() -> f64 {
    2.0
}

fn default_floor() -> f64 {
    -95.0
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid environment: {0}")]
    Environment(String),
    #[error("invalid trace: {0}")]
    Trace(String),
    #[error("interval must be positive")]
    Interval,
    #[error("sink failed at step {step}: {message}")]
    Sink { step: usize, message: String },
}

impl Environment {
    pub fn validate(&self) -> Result<(), SimError> {
        let mut macs = std::collections::BTreeSet::new();
        for n in &self.nodes {
            if !macs.insert(n.mac.clone()) {
                return Err(SimError::Environment(format!("duplicate mac {}", n.mac)));
            }
            if !(1.5..=6.0).contains(&n.path_loss_exponent) {
                return Err(SimError::Environment(format!(
                    "{}: pathLossExponent {} outside [1.5, 6]",
                    n.mac, n.path_loss_exponent
                )));
            }
            if !n.tx_power_dbm.is_finite() || !n.pos.iter().all(|v| v.is_finite()) {
                return Err(SimError::Environment(format!("{}: non-finite field", n.mac)));
            }
        }
        if !(self.noise_sigma_db >= 0.0 && self.noise_sigma_db.is_finite()) {
            return Err(SimError::Environment("noiseSigmaDb must be >= 0".into()));
        }
        Ok(())
    }

    pub fn node(&self, mac: &Mac) -> Option<&BeaconNode> {
        self.nodes.iter().find(|n| &n.mac == mac)
    }
}

/// Seeded deterministic random source.
#[derive(Debug, Clone)]
pub struct SimRng(ChaCha8Rng);

impl SimRng {
    pub fn seeded(seed: u64) -> Self {
        SimRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn gaussian(&mut self, sigma: f64) -> f64 {
        if sigma <= 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sigma).map(|n| n.sample(&mut self.0)).unwrap_or(0.0)
    }
}

/// Received strength of `node` at `pos`, rounded to whole dBm, or `None`
/// below the detection floor. Without `rng` the mean is returned.
pub fn rssi_at(env: &Environment, node: &BeaconNode, pos: (f64, f64), rng: Option<&mut SimRng>) -> Option<i32> {
    let d = euclidean((node.pos[0], node.pos[1]), pos);
    let mut value = node.model().mean_rssi(d);
    if let Some(rng) = rng {
        value += rng.gaussian(env.noise_sigma_db);
    }
    if value < env.detect_floor_dbm {
        return None;
    }
    Some((value.round() as i32).clamp(RSSI_MIN, RSSI_MAX))
}

/// Ambient readings in effect at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Ambient {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lux: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_rms: Option<f64>,
}

/// Device pose fed to [`synthesize_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DevicePose {
    pub pos: (f64, f64),
    pub speed_mps: f64,
    pub azimuth_deg: f64,
}

fn accel_sigma(speed_mps: f64) -> f64 {
    if speed_mps < 0.3 {
        0.05
    } else if speed_mps <= 2.5 {
        0.8
    } else {
        0.3
    }
}

/// One scan as the phone would report it at `t_ms`.
pub fn synthesize_scan(env: &Environment, pose: DevicePose, ambient: Ambient, t_ms: u64, rng: &mut SimRng) -> ScanPayload {
    let observations: Vec<NetworkObservation> = env
        .nodes
        .iter()
        .filter_map(|node| {
            rssi_at(env, node, pose.pos, Some(rng))
                .map(|rssi| NetworkObservation::new(node.ssid.clone(), node.mac.clone(), rssi, node.kind, t_ms))
        })
        .collect();

    let (lat, lon) = env.origin.to_lat_lon(pose.pos);
    let sigma = accel_sigma(pose.speed_mps);
    let accel = (0..ACCEL_SAMPLES_PER_SCAN)
        .map(|k| {
            let t = t_ms.saturating_sub((ACCEL_SAMPLES_PER_SCAN - 1 - k) * ACCEL_SPACING_MS);
            AccelSample { ax: 0.0, ay: 0.0, az: GRAVITY_MPS2 + rng.gaussian(sigma), t }
        })
        .collect();
    let sensors = SensorBatch {
        gps: vec![GpsSample { lat, lon, speed_mps: Some(pose.speed_mps), t: t_ms }],
        accel,
        orient: vec![OrientSample { azimuth: pose.azimuth_deg.rem_euclid(360.0), pitch: 0.0, roll: 0.0, t: t_ms }],
        audio: ambient.audio_rms.map(|rms| AudioSample { rms, t: t_ms }).into_iter().collect(),
        light: ambient.lux.map(|lux| LightSample { lux, t: t_ms }).into_iter().collect(),
    };
    ScanPayload {
        fingerprint: Some(Fingerprint::from_observations(observations)),
        sensors: Some(sensors),
        source: "sim".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    #[serde(alias = "t_s", rename = "tS")]
    pub t_s: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AmbientPoint {
    #[serde(alias = "t_s", rename = "tS")]
    pub t_s: f64,
    #[serde(default)]
    pub lux: Option<f64>,
    #[serde(default, alias = "audio_rms")]
    pub audio_rms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RotateSpan {
    #[serde(alias = "t0_s", rename = "t0S")]
    pub t0_s: f64,
    #[serde(alias = "t1_s", rename = "t1S")]
    pub t1_s: f64,
    #[serde(alias = "rate_dps")]
    pub rate_dps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Trace {
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub ambient: Vec<AmbientPoint>,
    #[serde(default, alias = "rotate_spans")]
    pub rotate_spans: Vec<RotateSpan>,
}

impl Trace {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.waypoints.is_empty() {
            return Err(SimError::Trace("at least one waypoint is required".into()));
        }
        if self.waypoints.windows(2).any(|w| w[1].t_s <= w[0].t_s) {
            return Err(SimError::Trace("waypoint times must strictly increase".into()));
        }
        if self.waypoints.iter().any(|w| w.t_s < 0.0 || !w.t_s.is_finite() || !w.x.is_finite() || !w.y.is_finite()) {
            return Err(SimError::Trace("waypoints must be finite with t >= 0".into()));
        }
        if self.ambient.windows(2).any(|w| w[1].t_s < w[0].t_s) {
            return Err(SimError::Trace("ambient schedule must be sorted by time".into()));
        }
        if self.rotate_spans.windows(2).any(|w| w[1].t0_s < w[0].t0_s) || self.rotate_spans.iter().any(|s| s.t1_s < s.t0_s) {
            return Err(SimError::Trace("rotate spans must be sorted and well-formed".into()));
        }
        Ok(())
    }

    /// Interpolated position and segment speed at `t_s`. Times on a waypoint
    /// use the segment that starts there (the last waypoint uses the final segment).
    pub fn pose_at(&self, t_s: f64) -> DevicePose {
        let w = &self.waypoints;
        let azimuth_deg = self.azimuth_at(t_s);
        if w.len() == 1 || t_s <= w[0].t_s {
            let speed = if w.len() > 1 { segment_speed(&w[0], &w[1]) } else { 0.0 };
            return DevicePose { pos: (w[0].x, w[0].y), speed_mps: speed, azimuth_deg };
        }
        let seg = w.windows(2).position(|p| t_s < p[1].t_s).unwrap_or(w.len() - 2);
        let (a, b) = (&w[seg], &w[seg + 1]);
        let f = ((t_s - a.t_s) / (b.t_s - a.t_s)).clamp(0.0, 1.0);
        DevicePose {
            pos: (a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f),
            speed_mps: segment_speed(a, b),
            azimuth_deg,
        }
    }

    /// Accumulated rotation since the first waypoint, modulo 360.
    pub fn azimuth_at(&self, t_s: f64) -> f64 {
        let start = self.waypoints.first().map_or(0.0, |w| w.t_s);
        let total: f64 = self
            .rotate_spans
            .iter()
            .map(|s| {
                let lo = s.t0_s.max(start);
                let hi = s.t1_s.min(t_s);
                if hi > lo {
                    s.rate_dps * (hi - lo)
                } else {
                    0.0
                }
            })
            .sum();
        total.rem_euclid(360.0)
    }

    /// Latest scheduled value of each ambient field at or before `t_s`.
    pub fn ambient_at(&self, t_s: f64) -> Ambient {
        let past = self.ambient.iter().filter(|a| a.t_s <= t_s);
        Ambient {
            lux: past.clone().filter_map(|a| a.lux).last(),
            audio_rms: past.filter_map(|a| a.audio_rms).last(),
        }
    }

    /// Simulated step times in ms, from the first to the last waypoint.
    pub fn step_times_ms(&self, interval_ms: u64) -> Vec<u64> {
        let first = (self.waypoints[0].t_s * 1000.0).round() as u64;
        let last = (self.waypoints[self.waypoints.len() - 1].t_s * 1000.0).round() as u64;
        (first..=last).step_by(interval_ms.max(1) as usize).collect()
    }
}

fn segment_speed(a: &Waypoint, b: &Waypoint) -> f64 {
    euclidean((a.x, a.y), (b.x, b.y)) / (b.t_s - a.t_s)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct SinkError(pub String);

/// Destination for synthesized scans.
pub trait ScanSink {
    /// Delivers one payload; returns the receiver's current sequence number if it has one.
    fn emit(&mut self, payload: &ScanPayload) -> Result<Option<u64>, SinkError>;

    /// Sequence number before the run starts, when the sink can tell.
    fn current_seq(&mut self) -> Option<u64> {
        None
    }
}

/// Writes one JSON payload per line.
pub struct JsonlSink<W: Write> {
    out: W,
}

impl<W: Write> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        JsonlSink { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> ScanSink for JsonlSink<W> {
    fn emit(&mut self, payload: &ScanPayload) -> Result<Option<u64>, SinkError> {
        let line = serde_json::to_string(payload).map_err(|e| SinkError(e.to_string()))?;
        writeln!(self.out, "{line}").map_err(|e| SinkError(e.to_string()))?;
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub steps: usize,
    /// Distinct state publications seen at the sink; `None` when the sink reports no sequence numbers.
    pub publishes: Option<usize>,
}

fn drive(payloads: impl Iterator<Item = ScanPayload>, sink: &mut dyn ScanSink) -> Result<RunSummary, SimError> {
    let mut last = sink.current_seq();
    let mut publishes: Option<usize> = None;
    let mut steps = 0;
    for (step, payload) in payloads.enumerate() {
        let seq = sink.emit(&payload).map_err(|e| SimError::Sink { step, message: e.0 })?;
        if let Some(seq) = seq {
            let count = publishes.get_or_insert(0);
            if last.map_or(seq > 0, |l| seq > l) {
                *count += 1;
            }
            last = Some(seq);
        }
        steps += 1;
    }
    Ok(RunSummary { steps, publishes })
}

/// Steps the trace at `interval_ms`, emitting one scan per step.
pub fn run_trace(
    env: &Environment,
    trace: &Trace,
    interval_ms: u64,
    sink: &mut dyn ScanSink,
    rng: &mut SimRng,
) -> Result<RunSummary, SimError> {
    if interval_ms == 0 {
        return Err(SimError::Interval);
    }
    env.validate()?;
    trace.validate()?;
    let payloads = trace.step_times_ms(interval_ms).into_iter().map(|t_ms| {
        let t_s = t_ms as f64 / 1000.0;
        synthesize_scan(env, trace.pose_at(t_s), trace.ambient_at(t_s), t_ms, rng)
    });
    drive(payloads, sink)
}

/// Re-sends previously recorded payloads.
pub fn replay(payloads: &[ScanPayload], sink: &mut dyn ScanSink) -> Result<RunSummary, SimError> {
    drive(payloads.iter().cloned(), sink)
}

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct JsonlError {
    pub line: usize,
    pub message: String,
}

/// Reads a JSONL scan log; blank lines are skipped.
pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<ScanPayload>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| JsonlError { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let p: ScanPayload = serde_json::from_str(&line).map_err(|e| JsonlError { line: i + 1, message: e.to_string() })?;
        out.push(p);
    }
    Ok(out)
}
