//! Interactive simulator bridge: a steerable virtual device whose scans are
//! fed into the store on a fixed interval.

use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use phyweb_core::num::euclidean;
use phyweb_core::scan::ScanPayload;
use phyweb_core::simulator::{synthesize_scan, Ambient, DevicePose, Environment, SimRng};
use serde::Serialize;

use crate::store::StateStore;

/// Shortest time base used for the interactive speed estimate.
const MIN_SPEED_DT_MS: u64 = 100;

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DeviceView {
    pub x: f64,
    pub y: f64,
    pub speed_mps: f64,
    pub ambient: Ambient,
}

struct Device {
    rng: SimRng,
    pos: (f64, f64),
    ambient: Ambient,
    last_move: Option<(u64, (f64, f64))>,
    speed_mps: f64,
    speed_at: u64,
}

pub struct SimBridge {
    env: Environment,
    interval_ms: u64,
    device: Mutex<Device>,
}

impl SimBridge {
    pub fn new(env: Environment, seed: u64, start: (f64, f64), interval_ms: u64) -> Self {
        SimBridge {
            env,
            interval_ms: interval_ms.max(1),
            device: Mutex::new(Device {
                rng: SimRng::seeded(seed),
                pos: start,
                ambient: Ambient::default(),
                last_move: None,
                speed_mps: 0.0,
                speed_at: 0,
            }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Device> {
        self.device.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn interval_ms(&self) -> u64 {
        self.interval_ms
    }

    /// How long an interactive speed estimate stays in effect without further moves.
    pub fn hold_ms(&self) -> u64 {
        3 * self.interval_ms
    }

    fn speed(&self, d: &Device, now: u64) -> f64 {
        if now.saturating_sub(d.speed_at) <= self.hold_ms() {
            d.speed_mps
        } else {
            0.0
        }
    }

    fn view(&self, d: &Device, now: u64) -> DeviceView {
        DeviceView { x: d.pos.0, y: d.pos.1, speed_mps: self.speed(d, now), ambient: d.ambient }
    }

    pub fn device(&self, now: u64) -> DeviceView {
        let d = self.lock();
        self.view(&d, now)
    }

    /// Moves the device. Speed is estimated from the previous interactive move.
    pub fn set_position(&self, x: f64, y: f64, now: u64) -> DeviceView {
        let mut d = self.lock();
        if let Some((t0, p0)) = d.last_move {
            let dt = now.saturating_sub(t0).max(MIN_SPEED_DT_MS) as f64 / 1000.0;
            d.speed_mps = euclidean(p0, (x, y)) / dt;
            d.speed_at = now;
        }
        d.last_move = Some((now, (x, y)));
        d.pos = (x, y);
        self.view(&d, now)
    }

    /// Updates whichever ambient readings are given.
    pub fn set_ambient(&self, lux: Option<f64>, audio_rms: Option<f64>, now: u64) -> DeviceView {
        let mut d = self.lock();
        if lux.is_some() {
            d.ambient.lux = lux;
        }
        if audio_rms.is_some() {
            d.ambient.audio_rms = audio_rms;
        }
        self.view(&d, now)
    }

    /// Synthesizes the scan the device reports at `now`.
    pub fn step(&self, now: u64) -> ScanPayload {
        let mut d = self.lock();
        let pose = DevicePose { pos: d.pos, speed_mps: self.speed(&d, now), azimuth_deg: 0.0 };
        let ambient = d.ambient;
        synthesize_scan(&self.env, pose, ambient, now, &mut d.rng)
    }

    /// Synthesizes a scan and ingests it; returns the store's seq.
    pub fn emit(&self, store: &StateStore, now: u64) -> u64 {
        let payload = self.step(now);
        match store.ingest(&payload) {
            Ok(r) => r.seq,
            Err(e) => {
                tracing::warn!("simulated scan rejected: {e}");
                store.snapshot().seq
            }
        }
    }
}

/// Emits a scan every interval until the returned task is aborted.
pub fn spawn_ticker(bridge: Arc<SimBridge>, store: Arc<StateStore>) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_millis(bridge.interval_ms()));
        tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tick.tick().await;
            bridge.emit(&store, now_ms());
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use phyweb_core::context::{LightLevel, Movement, Thresholds};
    use phyweb_core::fingerprint::{Mac, NetworkKind, NodeCondition, ProximityPredicate};
    use phyweb_core::simulator::{BeaconNode, GeoOrigin};

    fn env() -> Environment {
        Environment {
            nodes: vec![BeaconNode {
                mac: Mac::parse("aa:bb:cc:00:00:01").unwrap(),
                ssid: "mall".into(),
                kind: NetworkKind::Ble,
                pos: [0.0, 0.0],
                tx_power_dbm: -45.0,
                path_loss_exponent: 2.5,
            }],
            noise_sigma_db: 0.0,
            detect_floor_dbm: -95.0,
            origin: GeoOrigin::default(),
        }
    }

    fn store() -> StateStore {
        let mac = Mac::parse("aa:bb:cc:00:00:01").unwrap();
        StateStore::new(Thresholds::default(), vec![ProximityPredicate::new("BIG_MALL", vec![NodeCondition::mac(&mac, -70)])])
    }

    #[test]
    fn entering_beacon_radius_sets_zone_after_dwell() {
        let (bridge, store) = (SimBridge::new(env(), 1, (100.0, 0.0), 1000), store());
        let t0 = 1_000_000;
        bridge.emit(&store, t0);
        bridge.set_position(2.0, 0.0, t0 + 500);
        bridge.emit(&store, t0 + 1000);
        assert!(!store.snapshot().zones["BIG_MALL"]);
        bridge.emit(&store, t0 + 2000);
        assert!(store.snapshot().zones["BIG_MALL"]);
    }

    #[test]
    fn darkness_is_reported_next_state() {
        let (bridge, store) = (SimBridge::new(env(), 1, (0.0, 0.0), 1000), store());
        bridge.set_ambient(Some(0.0), None, 5000);
        bridge.emit(&store, 5000);
        assert_eq!(store.snapshot().light, LightLevel::Dark);
    }

    #[test]
    fn rapid_moves_leave_stationary() {
        let (bridge, store) = (SimBridge::new(env(), 1, (0.0, 0.0), 1000), store());
        let mut t = 1_000_000;
        for _ in 0..6 {
            bridge.emit(&store, t);
            t += 1000;
        }
        assert_eq!(store.snapshot().movement, Movement::Stationary);
        bridge.set_position(0.0, 0.0, t);
        let v = bridge.set_position(10.0, 0.0, t + 800);
        assert!((v.speed_mps - 12.5).abs() < 1e-9);
        for k in 1..=3 {
            bridge.emit(&store, t + 800 + k * 1000);
        }
        assert_ne!(store.snapshot().movement, Movement::Stationary);
        // after the hold expires the device is reported still again
        assert_eq!(bridge.device(t + 800 + 4000).speed_mps, 0.0);
    }
}
