//! Sensor windows, the ambient classifiers, and the fused [`ContextState`].

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{advance_match, match_raw, Fingerprint, MatchState, ProximityPredicate};
use crate::num::{amplitude_to_db, haversine_m, mean, median, std_dev, wrap_delta_deg};

pub const DEFAULT_WINDOW_MS: u64 = 5_000;
/// Per-sensor buffer cap; older samples are dropped first.
pub const MAX_SAMPLES_PER_SENSOR: usize = 1_024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GpsSample {
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_mps: Option<f64>,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub t: u64,
}

impl AccelSample {
    pub fn magnitude(&self) -> f64 {
        (self.ax * self.ax + self.ay * self.ay + self.az * self.az).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientSample {
    pub azimuth: f64,
    #[serde(default)]
    pub pitch: f64,
    #[serde(default)]
    pub roll: f64,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AudioSample {
    pub rms: f64,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightSample {
    pub lux: f64,
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensorSample {
    Gps(GpsSample),
    Accel(AccelSample),
    Orient(OrientSample),
    Audio(AudioSample),
    Light(LightSample),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{sensor} sample at t={t}: {message}")]
pub struct SampleError {
    pub sensor: &'static str,
    pub t: u64,
    pub message: String,
}

impl SensorSample {
    pub fn t(&self) -> u64 {
        match self {
            SensorSample::Gps(s) => s.t,
            SensorSample::Accel(s) => s.t,
            SensorSample::Orient(s) => s.t,
            SensorSample::Audio(s) => s.t,
            SensorSample::Light(s) => s.t,
        }
    }

    pub fn validate(&self) -> Result<(), SampleError> {
        let fail = |sensor, message: &str| Err(SampleError { sensor, t: self.t(), message: message.into() });
        match *self {
            SensorSample::Gps(g) => {
                if !(-90.0..=90.0).contains(&g.lat) || !(-180.0..=180.0).contains(&g.lon) {
                    return fail("gps", "coordinates out of range");
                }
                if g.speed_mps.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
                    return fail("gps", "speed must be finite and non-negative");
                }
            }
            SensorSample::Accel(a) => {
                if ![a.ax, a.ay, a.az].iter().all(|v| v.is_finite()) {
                    return fail("accel", "components must be finite");
                }
            }
            SensorSample::Orient(o) => {
                if !(0.0..360.0).contains(&o.azimuth) || !o.pitch.is_finite() || !o.roll.is_finite() {
                    return fail("orient", "azimuth must lie in [0, 360)");
                }
            }
            SensorSample::Audio(a) => {
                if !(0.0..=1.0).contains(&a.rms) {
                    return fail("audio", "rms must lie in [0, 1]");
                }
            }
            SensorSample::Light(l) => {
                if !(l.lux >= 0.0 && l.lux.is_finite()) {
                    return fail("light", "lux must be finite and non-negative");
                }
            }
        }
        Ok(())
    }
}

/// Trailing time window over every sensor stream.
///
/// Each buffer is kept sorted by `t`. Eviction is driven by the newest sample
/// seen on any sensor, so a stream that goes quiet ages out with the rest.
#[derive(Debug, Clone)]
pub struct SensorWindow {
    window_ms: u64,
    newest: Option<u64>,
    gps: VecDeque<GpsSample>,
    accel: VecDeque<AccelSample>,
    orient: VecDeque<OrientSample>,
    audio: VecDeque<AudioSample>,
    light: VecDeque<LightSample>,
}

impl Default for SensorWindow {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW_MS)
    }
}

fn insert_sorted<T>(buf: &mut VecDeque<T>, sample: T, t_of: impl Fn(&T) -> u64) {
    let t = t_of(&sample);
    let pos = buf.partition_point(|s| t_of(s) <= t);
    buf.insert(pos, sample);
    if buf.len() > MAX_SAMPLES_PER_SENSOR {
        buf.pop_front();
    }
}

fn evict<T>(buf: &mut VecDeque<T>, cutoff: u64, t_of: impl Fn(&T) -> u64) {
    while buf.front().is_some_and(|s| t_of(s) < cutoff) {
        buf.pop_front();
    }
}

impl SensorWindow {
    pub fn new(window_ms: u64) -> Self {
        SensorWindow {
            window_ms,
            newest: None,
            gps: VecDeque::new(),
            accel: VecDeque::new(),
            orient: VecDeque::new(),
            audio: VecDeque::new(),
            light: VecDeque::new(),
        }
    }

    pub fn window_ms(&self) -> u64 {
        self.window_ms
    }

    /// Newest timestamp seen on any sensor.
    pub fn newest_t(&self) -> Option<u64> {
        self.newest
    }

    /// Adds a sample. Samples already older than the window are ignored.
    pub fn push(&mut self, sample: SensorSample) {
        let t = sample.t();
        if let Some(newest) = self.newest {
            if newest.saturating_sub(t) > self.window_ms {
                return;
            }
        }
        match sample {
            SensorSample::Gps(s) => insert_sorted(&mut self.gps, s, |s| s.t),
            SensorSample::Accel(s) => insert_sorted(&mut self.accel, s, |s| s.t),
            SensorSample::Orient(s) => insert_sorted(&mut self.orient, s, |s| s.t),
            SensorSample::Audio(s) => insert_sorted(&mut self.audio, s, |s| s.t),
            SensorSample::Light(s) => insert_sorted(&mut self.light, s, |s| s.t),
        }
        let newest = self.newest.map_or(t, |n| n.max(t));
        self.newest = Some(newest);
        let cutoff = newest.saturating_sub(self.window_ms);
        evict(&mut self.gps, cutoff, |s| s.t);
        evict(&mut self.accel, cutoff, |s| s.t);
        evict(&mut self.orient, cutoff, |s| s.t);
        evict(&mut self.audio, cutoff, |s| s.t);
        evict(&mut self.light, cutoff, |s| s.t);
    }

    pub fn extend(&mut self, samples: impl IntoIterator<Item = SensorSample>) {
        for s in samples {
            self.push(s);
        }
    }

    pub fn gps(&self) -> &VecDeque<GpsSample> {
        &self.gps
    }
    pub fn accel(&self) -> &VecDeque<AccelSample> {
        &self.accel
    }
    pub fn orient(&self) -> &VecDeque<OrientSample> {
        &self.orient
    }
    pub fn audio(&self) -> &VecDeque<AudioSample> {
        &self.audio
    }
    pub fn light(&self) -> &VecDeque<LightSample> {
        &self.light
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum Movement {
    #[default]
    Unknown,
    Stationary,
    Walking,
    Vehicle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum NoiseLevel {
    #[default]
    Unknown,
    Quiet,
    Moderate,
    Loud,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum LightLevel {
    #[default]
    Unknown,
    Dark,
    Dim,
    Normal,
    Bright,
}

macro_rules! enum_names {
    ($ty:ty { $($variant:ident => $name:literal),* $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $(<$ty>::$variant => $name),* }
            }
        }
    };
}

enum_names!(Movement { Unknown => "UNKNOWN", Stationary => "STATIONARY", Walking => "WALKING", Vehicle => "VEHICLE" });
enum_names!(NoiseLevel { Unknown => "UNKNOWN", Quiet => "QUIET", Moderate => "MODERATE", Loud => "LOUD" });
enum_names!(LightLevel { Unknown => "UNKNOWN", Dark => "DARK", Dim => "DIM", Normal => "NORMAL", Bright => "BRIGHT" });

/// Classifier parameters. Every field can be overridden from the gateway config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct Thresholds {
    pub window_ms: u64,
    pub stationary_below_mps: f64,
    pub walking_max_mps: f64,
    pub vehicle_above_mps: f64,
    /// |a| stddev separating walking from riding inside the ambiguous speed band.
    pub walking_accel_std: f64,
    pub stable_accel_std: f64,
    pub gravity_mps2: f64,
    pub gravity_tolerance_mps2: f64,
    pub quiet_below_db: f64,
    pub loud_above_db: f64,
    pub silence_floor_db: f64,
    pub rotating_above_dps: f64,
    pub dim_from_lux: f64,
    pub normal_from_lux: f64,
    pub bright_from_lux: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            window_ms: DEFAULT_WINDOW_MS,
            stationary_below_mps: 0.3,
            walking_max_mps: 2.5,
            vehicle_above_mps: 6.0,
            walking_accel_std: 0.6,
            stable_accel_std: 0.15,
            gravity_mps2: 9.81,
            gravity_tolerance_mps2: 0.5,
            quiet_below_db: -40.0,
            loud_above_db: -20.0,
            silence_floor_db: -120.0,
            rotating_above_dps: 30.0,
            dim_from_lux: 10.0,
            normal_from_lux: 100.0,
            bright_from_lux: 1000.0,
        }
    }
}

impl Thresholds {
    /// Range and ordering checks applied to configuration overrides.
    pub fn validate(&self) -> Result<(), String> {
        let finite = [
            self.stationary_below_mps,
            self.walking_max_mps,
            self.vehicle_above_mps,
            self.walking_accel_std,
            self.stable_accel_std,
            self.gravity_mps2,
            self.gravity_tolerance_mps2,
            self.quiet_below_db,
            self.loud_above_db,
            self.silence_floor_db,
            self.rotating_above_dps,
            self.dim_from_lux,
            self.normal_from_lux,
            self.bright_from_lux,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err("thresholds must be finite".into());
        }
        if self.window_ms == 0 {
            return Err("windowMs must be positive".into());
        }
        if !(0.0 <= self.stationary_below_mps
            && self.stationary_below_mps <= self.walking_max_mps
            && self.walking_max_mps <= self.vehicle_above_mps)
        {
            return Err("speed thresholds must satisfy 0 <= stationary <= walking <= vehicle".into());
        }
        if self.walking_accel_std < 0.0 || self.stable_accel_std < 0.0 || self.gravity_tolerance_mps2 < 0.0 {
            return Err("accelerometer thresholds must be non-negative".into());
        }
        if !(self.silence_floor_db <= self.quiet_below_db && self.quiet_below_db <= self.loud_above_db && self.loud_above_db <= 0.0)
        {
            return Err("noise thresholds must satisfy floor <= quiet <= loud <= 0".into());
        }
        if self.rotating_above_dps < 0.0 {
            return Err("rotatingAboveDps must be non-negative".into());
        }
        if !(0.0 <= self.dim_from_lux && self.dim_from_lux <= self.normal_from_lux && self.normal_from_lux <= self.bright_from_lux) {
            return Err("lux thresholds must be non-negative and ascending".into());
        }
        Ok(())
    }
}

/// Speeds observed over the window: explicit `speed_mps` where the fix has
/// one, otherwise great-circle distance over elapsed time from the previous fix.
fn gps_speeds(window: &SensorWindow) -> Vec<f64> {
    let fixes = window.gps();
    let mut speeds = Vec::with_capacity(fixes.len());
    for (i, fix) in fixes.iter().enumerate() {
        if let Some(s) = fix.speed_mps {
            speeds.push(s);
        } else if i > 0 {
            let prev = fixes[i - 1];
            let dt = fix.t.saturating_sub(prev.t);
            if dt > 0 {
                let d = haversine_m(prev.lat, prev.lon, fix.lat, fix.lon);
                speeds.push(d / (dt as f64 / 1000.0));
            }
        }
    }
    speeds
}

/// Merged moving-user / pedestrian-vs-vehicle classifier.
pub fn classify_movement(window: &SensorWindow, th: &Thresholds) -> Movement {
    if window.gps().len() < 2 {
        return Movement::Unknown;
    }
    let Some(speed) = median(&gps_speeds(window)) else {
        return Movement::Unknown;
    };
    if speed < th.stationary_below_mps {
        Movement::Stationary
    } else if speed <= th.walking_max_mps {
        Movement::Walking
    } else if speed > th.vehicle_above_mps {
        Movement::Vehicle
    } else {
        let mags: Vec<f64> = window.accel().iter().map(AccelSample::magnitude).collect();
        if mags.len() < 2 {
            return Movement::Unknown;
        }
        match std_dev(&mags) {
            Some(sd) if sd > th.walking_accel_std => Movement::Walking,
            Some(_) => Movement::Vehicle,
            None => Movement::Unknown,
        }
    }
}

/// Noise level in dBFS from the mean audio RMS.
pub fn noise_level(window: &SensorWindow, th: &Thresholds) -> (Option<f64>, NoiseLevel) {
    let rms: Vec<f64> = window.audio().iter().map(|a| a.rms).collect();
    let Some(mean_rms) = mean(&rms) else {
        return (None, NoiseLevel::Unknown);
    };
    let db = amplitude_to_db(mean_rms, th.silence_floor_db);
    let band = if db < th.quiet_below_db {
        NoiseLevel::Quiet
    } else if db <= th.loud_above_db {
        NoiseLevel::Moderate
    } else {
        NoiseLevel::Loud
    };
    (Some(db), band)
}

/// Whether the device rests on a stable surface; needs three accel samples.
pub fn surface_stability(window: &SensorWindow, th: &Thresholds) -> Option<bool> {
    if window.accel().len() < 3 {
        return None;
    }
    let mags: Vec<f64> = window.accel().iter().map(AccelSample::magnitude).collect();
    let sd = std_dev(&mags)?;
    let m = mean(&mags)?;
    let lo = th.gravity_mps2 - th.gravity_tolerance_mps2;
    let hi = th.gravity_mps2 + th.gravity_tolerance_mps2;
    Some(sd < th.stable_accel_std && (lo..=hi).contains(&m))
}

/// Whether the device is being rotated, from the fastest wrap-aware azimuth
/// rate between consecutive orientation samples.
pub fn rotation_trend(window: &SensorWindow, th: &Thresholds) -> Option<bool> {
    let o = window.orient();
    if o.len() < 2 {
        return None;
    }
    let max_rate = o
        .iter()
        .zip(o.iter().skip(1))
        .filter(|(a, b)| b.t > a.t)
        .map(|(a, b)| wrap_delta_deg(a.azimuth, b.azimuth).abs() / ((b.t - a.t) as f64 / 1000.0))
        .fold(0.0f64, f64::max);
    Some(max_rate > th.rotating_above_dps)
}

/// Light band from the most recent lux reading.
pub fn light_level(window: &SensorWindow, th: &Thresholds) -> (Option<f64>, LightLevel) {
    let Some(latest) = window.light().back() else {
        return (None, LightLevel::Unknown);
    };
    let lux = latest.lux;
    let band = if lux < th.dim_from_lux {
        LightLevel::Dark
    } else if lux < th.normal_from_lux {
        LightLevel::Dim
    } else if lux < th.bright_from_lux {
        LightLevel::Normal
    } else {
        LightLevel::Bright
    };
    (Some(lux), band)
}

/// Fused snapshot of everything the adaptation rules can see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", default)]
pub struct ContextState {
    pub seq: u64,
    pub updated_at: u64,
    pub movement: Movement,
    pub noise_db: Option<f64>,
    pub noise: NoiseLevel,
    pub stable_surface: Option<bool>,
    pub rotating: Option<bool>,
    pub lux: Option<f64>,
    pub light: LightLevel,
    pub zones: BTreeMap<String, bool>,
    pub networks: Fingerprint,
}

impl ContextState {
    /// Zone ids currently true, sorted.
    pub fn active_zones(&self) -> Vec<&str> {
        self.zones.iter().filter(|(_, &v)| v).map(|(k, _)| k.as_str()).collect()
    }
}

/// A registered predicate with its running hysteresis state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedPredicate {
    pub predicate: ProximityPredicate,
    pub state: MatchState,
}

impl TrackedPredicate {
    pub fn new(predicate: ProximityPredicate) -> Self {
        TrackedPredicate { predicate, state: MatchState::default() }
    }
}

/// Runs every classifier and advances every predicate, producing the next
/// state with `seq = prev_seq + 1`. `tracked` is updated in place.
pub fn build_context(
    window: &SensorWindow,
    networks: &Fingerprint,
    tracked: &mut [TrackedPredicate],
    prev_seq: u64,
    th: &Thresholds,
) -> ContextState {
    let seq = prev_seq + 1;
    let mut zones = BTreeMap::new();
    for tp in tracked.iter_mut() {
        let outcome = match_raw(networks, &tp.predicate);
        tp.state = advance_match(tp.state, &outcome, &tp.predicate, seq);
        zones.insert(tp.predicate.id.clone(), tp.state.matched);
    }
    let (noise_db, noise) = noise_level(window, th);
    let (lux, light) = light_level(window, th);
    let updated_at = window.newest_t().unwrap_or(0).max(networks.captured_at());
    ContextState {
        seq,
        updated_at,
        movement: classify_movement(window, th),
        noise_db,
        noise,
        stable_surface: surface_stability(window, th),
        rotating: rotation_trend(window, th),
        lux,
        light,
        zones,
        networks: networks.clone(),
    }
}
