//! The payload a device (or the simulator) submits to the gateway.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{AccelSample, AudioSample, GpsSample, LightSample, OrientSample, SampleError, SensorSample};
use crate::fingerprint::Fingerprint;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorBatch {
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub gps: Vec<GpsSample>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub accel: Vec<AccelSample>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub orient: Vec<OrientSample>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub audio: Vec<AudioSample>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub light: Vec<LightSample>,
}

impl SensorBatch {
    pub fn samples(&self) -> impl Iterator<Item = SensorSample> + '_ {
        self.gps
            .iter()
            .copied()
            .map(SensorSample::Gps)
            .chain(self.accel.iter().copied().map(SensorSample::Accel))
            .chain(self.orient.iter().copied().map(SensorSample::Orient))
            .chain(self.audio.iter().copied().map(SensorSample::Audio))
            .chain(self.light.iter().copied().map(SensorSample::Light))
    }

    pub fn is_empty(&self) -> bool {
        self.samples().next().is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScanPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<Fingerprint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensors: Option<SensorBatch>,
    #[serde(default)]
    pub source: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PayloadError {
    #[error("payload carries neither a fingerprint nor sensors")]
    Empty,
    #[error(transparent)]
    Sample(#[from] SampleError),
}

impl ScanPayload {
    pub fn validate(&self) -> Result<(), PayloadError> {
        if self.fingerprint.is_none() && self.sensors.is_none() {
            return Err(PayloadError::Empty);
        }
        if let Some(sensors) = &self.sensors {
            for s in sensors.samples() {
                s.validate()?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let text = r#"{"fingerprint":[{"SSID":"a","MAC":"AA:BB:CC:DD:EE:01","RSSI":-50}],
                       "sensors":{"gps":[{"lat":1.0,"lon":2.0,"speedMps":3.0,"t":5}],"audio":[{"rms":0.1,"t":5}]},
                       "source":"phone"}"#;
        let p: ScanPayload = serde_json::from_str(text).unwrap();
        p.validate().unwrap();
        assert_eq!(p.fingerprint.as_ref().unwrap().len(), 1);
        let s = p.sensors.as_ref().unwrap();
        assert_eq!(s.gps[0].speed_mps, Some(3.0));
        assert_eq!(s.samples().count(), 2);
        let back: ScanPayload = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_empty_and_invalid() {
        assert_eq!(ScanPayload::default().validate(), Err(PayloadError::Empty));
        let p: ScanPayload = serde_json::from_str(r#"{"sensors":{"light":[{"lux":-3,"t":0}]}}"#).unwrap();
        assert!(matches!(p.validate(), Err(PayloadError::Sample(_))));
        assert!(serde_json::from_str::<ScanPayload>(r#"{"fingerprint":[{"MAC":"x","RSSI":1}]}"#).is_err());
    }
}
