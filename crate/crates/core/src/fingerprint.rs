//! Wireless-network fingerprints and debounced proximity matching.
//!
//! A [`Fingerprint`] is the set of nodes seen in one scan. On the wire it is a
//! JSON array whose elements carry `SSID`, `MAC` and `RSSI` keys (plus the
//! optional `kind` and `observed_at`). A [`ProximityPredicate`] names a
//! condition over those nodes; [`match_raw`] evaluates it against one scan and
//! [`advance_match`] folds the per-scan outcomes through an enter/exit
//! hysteresis with a dwell count.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

pub const RSSI_MIN: i32 = -120;
pub const RSSI_MAX: i32 = 0;
pub const DEFAULT_MIN_RSSI: i32 = -90;
pub const DEFAULT_EXIT_MARGIN_DB: u32 = 5;
pub const DEFAULT_DWELL_SCANS: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FingerprintError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("element {index}: {message}")]
    Validation { index: usize, message: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid MAC address {0:?}")]
pub struct MacError(pub String);

/// A MAC address in canonical form: six lowercase hex octets joined by `:`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mac(String);

impl Mac {
    /// Accepts `:` or `-` separated octets in any case, or 12 bare hex digits.
    pub fn parse(text: &str) -> Result<Self, MacError> {
        let trimmed = text.trim();
        let digits: String = if trimmed.len() == 12 {
            trimmed.to_string()
        } else {
            let parts: Vec<&str> = trimmed.split([':', '-']).collect();
            if parts.len() != 6 || parts.iter().any(|p| p.len() != 2) {
                return Err(MacError(text.to_string()));
            }
            parts.concat()
        };
        if digits.len() != 12 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(MacError(text.to_string()));
        }
        let lower = digits.to_ascii_lowercase();
        let octets: Vec<&str> = (0..6).map(|i| &lower[i * 2..i * 2 + 2]).collect();
        Ok(Mac(octets.join(":")))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Mac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Mac {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Mac {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Mac::parse(&text).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NetworkKind {
    #[default]
    Wifi,
    Ble,
    BtClassic,
}

impl NetworkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NetworkKind::Wifi => "WIFI",
            NetworkKind::Ble => "BLE",
            NetworkKind::BtClassic => "BT_CLASSIC",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.to_ascii_uppercase().as_str() {
            "WIFI" => Some(NetworkKind::Wifi),
            "BLE" => Some(NetworkKind::Ble),
            "BT_CLASSIC" => Some(NetworkKind::BtClassic),
            _ => None,
        }
    }
}

/// One sighted wireless node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkObservation {
    pub ssid: String,
    pub mac: Mac,
    pub rssi: i32,
    pub kind: NetworkKind,
    pub observed_at: u64,
}

impl NetworkObservation {
    pub fn new(ssid: impl Into<String>, mac: Mac, rssi: i32, kind: NetworkKind, observed_at: u64) -> Self {
        NetworkObservation { ssid: ssid.into(), mac, rssi, kind, observed_at }
    }

    fn sort_key(&self) -> (&Mac, NetworkKind) {
        (&self.mac, self.kind)
    }
}

/// The nodes visible in one scan, deduplicated on `(mac, kind)` and kept in
/// canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Fingerprint {
    observations: Vec<NetworkObservation>,
    captured_at: u64,
}

impl Fingerprint {
    /// Canonicalizes `observations`: duplicates on `(mac, kind)` keep the
    /// strongest reading (first one on ties), result sorted by mac then kind.
    /// `captured_at` is the newest `observed_at`.
    pub fn from_observations(observations: impl IntoIterator<Item = NetworkObservation>) -> Self {
        let mut kept: Vec<NetworkObservation> = Vec::new();
        for obs in observations {
            match kept.iter_mut().find(|k| k.sort_key() == obs.sort_key()) {
                Some(existing) if obs.rssi > existing.rssi => *existing = obs,
                Some(_) => {}
                None => kept.push(obs),
            }
        }
        kept.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let captured_at = kept.iter().map(|o| o.observed_at).max().unwrap_or(0);
        Fingerprint { observations: kept, captured_at }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn observations(&self) -> &[NetworkObservation] {
        &self.observations
    }

    pub fn captured_at(&self) -> u64 {
        self.captured_at
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    /// The `(mac, kind)` identity set, in canonical order.
    pub fn node_keys(&self) -> Vec<(Mac, NetworkKind)> {
        self.observations.iter().map(|o| (o.mac.clone(), o.kind)).collect()
    }

    fn to_value(&self) -> Value {
        Value::Array(
            self.observations
                .iter()
                .map(|o| {
                    let mut m = Map::new();
                    m.insert("SSID".into(), Value::from(o.ssid.clone()));
                    m.insert("MAC".into(), Value::from(o.mac.as_str()));
                    m.insert("RSSI".into(), Value::from(o.rssi));
                    m.insert("kind".into(), Value::from(o.kind.as_str()));
                    m.insert("observed_at".into(), Value::from(o.observed_at));
                    Value::Object(m)
                })
                .collect(),
        )
    }

    fn from_value(value: &Value) -> Result<Self, FingerprintError> {
        let items = value.as_array().ok_or_else(|| FingerprintError::Json {
            offset: 0,
            message: "expected a JSON array".into(),
        })?;
        let mut observations = Vec::with_capacity(items.len());
        for (index, item) in items.iter().enumerate() {
            observations.push(observation_from_value(index, item)?);
        }
        Ok(Self::from_observations(observations))
    }
}

fn invalid(index: usize, message: impl Into<String>) -> FingerprintError {
    FingerprintError::Validation { index, message: message.into() }
}

fn lookup<'a>(obj: &'a Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    obj.iter()
        .find(|(k, _)| names.iter().any(|n| k.eq_ignore_ascii_case(n)))
        .map(|(_, v)| v)
}

fn observation_from_value(index: usize, item: &Value) -> Result<NetworkObservation, FingerprintError> {
    let obj = item.as_object().ok_or_else(|| invalid(index, "expected an object"))?;

    let ssid = match lookup(obj, &["ssid"]) {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(invalid(index, "SSID must be a string")),
    };
    let mac_text = lookup(obj, &["mac"])
        .and_then(Value::as_str)
        .ok_or_else(|| invalid(index, "missing MAC"))?;
    let mac = Mac::parse(mac_text).map_err(|e| invalid(index, e.to_string()))?;

    let rssi_value = lookup(obj, &["rssi"]).ok_or_else(|| invalid(index, "missing RSSI"))?;
    let rssi = integral(rssi_value).ok_or_else(|| invalid(index, "RSSI must be an integer"))?;
    if !(RSSI_MIN as i64..=RSSI_MAX as i64).contains(&rssi) {
        return Err(invalid(index, format!("RSSI {rssi} outside [{RSSI_MIN}, {RSSI_MAX}]")));
    }

    let kind = match lookup(obj, &["kind"]) {
        None | Some(Value::Null) => NetworkKind::Wifi,
        Some(Value::String(s)) => {
            NetworkKind::parse(s).ok_or_else(|| invalid(index, format!("unknown kind {s:?}")))?
        }
        Some(_) => return Err(invalid(index, "kind must be a string")),
    };
    let observed_at = match lookup(obj, &["observed_at", "observedAt"]) {
        None | Some(Value::Null) => 0,
        Some(v) => v
            .as_u64()
            .ok_or_else(|| invalid(index, "observed_at must be a non-negative integer"))?,
    };

    Ok(NetworkObservation { ssid, mac, rssi: rssi as i32, kind, observed_at })
}

fn integral(v: &Value) -> Option<i64> {
    if let Some(i) = v.as_i64() {
        return Some(i);
    }
    let f = v.as_f64()?;
    (f.fract() == 0.0 && f.abs() < 1e9).then_some(f as i64)
}

/// Byte offset of a serde_json error position within `text`.
pub fn json_error_offset(text: &str, err: &serde_json::Error) -> usize {
    let (line, column) = (err.line(), err.column());
    if line == 0 {
        return 0;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Parses the JSON array wire form into a canonical [`Fingerprint`].
pub fn parse_fingerprint(text: &str) -> Result<Fingerprint, FingerprintError> {
    let value: Value = serde_json::from_str(text).map_err(|e| FingerprintError::Json {
        offset: json_error_offset(text, &e),
        message: e.to_string(),
    })?;
    Fingerprint::from_value(&value)
}

/// Serializes to the JSON array wire form, in canonical element order.
pub fn serialize_fingerprint(fp: &Fingerprint) -> String {
    fp.to_value().to_string()
}

impl Serialize for Fingerprint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        Fingerprint::from_value(&value).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MatchBy {
    Mac,
    Ssid,
}

/// One node requirement inside a [`ProximityPredicate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NodeCondition {
    pub match_by: MatchBy,
    /// Exact canonical MAC, or an SSID that is exact unless it ends in `*`.
    pub pattern: String,
    #[serde(default = "default_min_rssi")]
    pub min_rssi: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<NetworkKind>,
}

fn default_min_rssi() -> i32 {
    DEFAULT_MIN_RSSI
}

impl NodeCondition {
    pub fn mac(mac: &Mac, min_rssi: i32) -> Self {
        NodeCondition { match_by: MatchBy::Mac, pattern: mac.to_string(), min_rssi, kind: None }
    }

    pub fn ssid(pattern: impl Into<String>, min_rssi: i32) -> Self {
        NodeCondition { match_by: MatchBy::Ssid, pattern: pattern.into(), min_rssi, kind: None }
    }

    /// Pattern/kind match, ignoring signal strength.
    pub fn matches(&self, obs: &NetworkObservation) -> bool {
        if self.kind.is_some_and(|k| k != obs.kind) {
            return false;
        }
        match self.match_by {
            MatchBy::Mac => obs.mac.as_str() == self.pattern,
            MatchBy::Ssid => ssid_matches(&self.pattern, &obs.ssid),
        }
    }

    /// Strongest RSSI among matching observations.
    pub fn best_rssi(&self, fp: &Fingerprint) -> Option<i32> {
        fp.observations().iter().filter(|o| self.matches(o)).map(|o| o.rssi).max()
    }
}

/// Exact match, or prefix match when `pattern` ends with `*`.
pub fn ssid_matches(pattern: &str, ssid: &str) -> bool {
    match pattern.strip_suffix('*') {
        Some(prefix) => ssid.starts_with(prefix),
        None => ssid == pattern,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum MatchMode {
    #[default]
    Any,
    All,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PredicateError {
    #[error("malformed predicate JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("predicate {id:?}: {message}")]
    Invalid { id: String, message: String },
}

/// A named proximity condition with its hysteresis parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProximityPredicate {
    pub id: String,
    pub conditions: Vec<NodeCondition>,
    #[serde(default)]
    pub mode: MatchMode,
    #[serde(default = "default_exit_margin")]
    pub exit_margin_db: u32,
    #[serde(default = "default_dwell")]
    pub dwell_scans: u32,
}

fn default_exit_margin() -> u32 {
    DEFAULT_EXIT_MARGIN_DB
}

fn default_dwell() -> u32 {
    DEFAULT_DWELL_SCANS
}

impl ProximityPredicate {
    pub fn new(id: impl Into<String>, conditions: Vec<NodeCondition>) -> Self {
        ProximityPredicate {
            id: id.into(),
            conditions,
            mode: MatchMode::Any,
            exit_margin_db: DEFAULT_EXIT_MARGIN_DB,
            dwell_scans: DEFAULT_DWELL_SCANS,
        }
    }

    /// Checks the invariants and canonicalizes MAC patterns in place.
    pub fn validate(&mut self) -> Result<(), PredicateError> {
        let fail = |message: String| PredicateError::Invalid { id: self.id.clone(), message };
        if !crate::ruledsl::is_identifier(&self.id) {
            return Err(fail("id is not a valid identifier".into()));
        }
        if self.conditions.is_empty() {
            return Err(fail("conditions must not be empty".into()));
        }
        if self.dwell_scans == 0 {
            return Err(fail("dwellScans must be positive".into()));
        }
        for cond in &mut self.conditions {
            if !(RSSI_MIN..=RSSI_MAX).contains(&cond.min_rssi) {
                return Err(PredicateError::Invalid {
                    id: self.id.clone(),
                    message: format!("minRssi {} outside [{RSSI_MIN}, {RSSI_MAX}]", cond.min_rssi),
                });
            }
            if cond.match_by == MatchBy::Mac {
                let mac = Mac::parse(&cond.pattern).map_err(|e| PredicateError::Invalid {
                    id: self.id.clone(),
                    message: e.to_string(),
                })?;
                cond.pattern = mac.to_string();
            }
        }
        Ok(())
    }
}

/// Parses and validates a predicate file (a JSON array of predicates).
/// Duplicate ids are rejected.
pub fn parse_predicates(text: &str) -> Result<Vec<ProximityPredicate>, PredicateError> {
    let mut preds: Vec<ProximityPredicate> = serde_json::from_str(text).map_err(|e| PredicateError::Json {
        offset: json_error_offset(text, &e),
        message: e.to_string(),
    })?;
    for p in preds.iter_mut() {
        p.validate()?;
    }
    let mut seen = std::collections::BTreeSet::new();
    for p in &preds {
        if !seen.insert(p.id.clone()) {
            return Err(PredicateError::Invalid { id: p.id.clone(), message: "duplicate id".into() });
        }
    }
    Ok(preds)
}

/// Per-scan evaluation of a predicate, before hysteresis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOutcome {
    pub satisfied_enter: bool,
    pub satisfied_exit: bool,
    pub per_condition_best_rssi: Vec<Option<i32>>,
}

/// Evaluates `pred` against a single scan. A condition is enter-satisfied when
/// its best matching node reaches `min_rssi`, exit-satisfied when it reaches
/// `min_rssi - exit_margin_db`.
pub fn match_raw(fp: &Fingerprint, pred: &ProximityPredicate) -> MatchOutcome {
    let best: Vec<Option<i32>> = pred.conditions.iter().map(|c| c.best_rssi(fp)).collect();
    let margin = pred.exit_margin_db as i32;
    let enter = pred.conditions.iter().zip(&best).map(|(c, b)| b.is_some_and(|r| r >= c.min_rssi));
    let exit = pred
        .conditions
        .iter()
        .zip(&best)
        .map(|(c, b)| b.is_some_and(|r| r >= c.min_rssi - margin));
    let (satisfied_enter, satisfied_exit) = match pred.mode {
        MatchMode::Any => (enter.clone().any(|x| x), exit.clone().any(|x| x)),
        MatchMode::All => (enter.clone().all(|x| x), exit.clone().all(|x| x)),
    };
    MatchOutcome { satisfied_enter, satisfied_exit, per_condition_best_rssi: best }
}

/// Debounced match status of one predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchState {
    pub matched: bool,
    /// Consecutive scans supporting a pending transition.
    pub streak: u32,
    pub last_transition_seq: u64,
}

/// Folds one outcome into the hysteresis state. Entering needs `dwell_scans`
/// consecutive enter-satisfied scans; leaving needs `dwell_scans` consecutive
/// exit-unsatisfied scans. Any contrary scan resets the streak.
pub fn advance_match(state: MatchState, outcome: &MatchOutcome, pred: &ProximityPredicate, seq: u64) -> MatchState {
    let dwell = pred.dwell_scans.max(1);
    let toward_flip = if state.matched { !outcome.satisfied_exit } else { outcome.satisfied_enter };
    if !toward_flip {
        return MatchState { streak: 0, ..state };
    }
    let streak = state.streak + 1;
    if streak >= dwell {
        MatchState { matched: !state.matched, streak: 0, last_transition_seq: seq }
    } else {
        MatchState { streak, ..state }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mac(s: &str) -> Mac {
        Mac::parse(s).unwrap()
    }

    fn obs(m: &str, rssi: i32) -> NetworkObservation {
        NetworkObservation::new("n", mac(m), rssi, NetworkKind::Wifi, 0)
    }

    fn single(min_rssi: i32, margin: u32, dwell: u32) -> ProximityPredicate {
        ProximityPredicate {
            id: "SHOP".into(),
            conditions: vec![NodeCondition::mac(&mac("aa:bb:cc:dd:ee:ff"), min_rssi)],
            mode: MatchMode::Any,
            exit_margin_db: margin,
            dwell_scans: dwell,
        }
    }

    /// Runs the debouncer over an rssi sequence; returns (index, new matched) per transition.
    fn transitions(rssi: &[i32], pred: &ProximityPredicate) -> Vec<(usize, bool)> {
        let mut state = MatchState::default();
        let mut out = vec![];
        for (i, &r) in rssi.iter().enumerate() {
            let fp = Fingerprint::from_observations([obs("aa:bb:cc:dd:ee:ff", r)]);
            let next = advance_match(state, &match_raw(&fp, pred), pred, i as u64 + 1);
            if next.matched != state.matched {
                out.push((i, next.matched));
            }
            state = next;
        }
        out
    }

    #[test]
    fn parses_paper_shaped_element() {
        let fp = parse_fingerprint(r#"[{"SSID":"mall","MAC":"AA:BB:CC:DD:EE:FF","RSSI":-60}]"#).unwrap();
        assert_eq!(fp.len(), 1);
        let o = &fp.observations()[0];
        assert_eq!(o.mac.as_str(), "aa:bb:cc:dd:ee:ff");
        assert_eq!(o.rssi, -60);
        assert_eq!(o.ssid, "mall");
        assert_eq!(o.kind, NetworkKind::Wifi);
        assert_eq!(o.observed_at, 0);
    }

    #[test]
    fn empty_array_and_lowercase_keys() {
        assert!(parse_fingerprint("[]").unwrap().is_empty());
        let fp = parse_fingerprint(r#"[{"ssid":"x","mac":"01-02-03-04-05-06","rssi":-1,"kind":"ble"}]"#).unwrap();
        assert_eq!(fp.observations()[0].mac.as_str(), "01:02:03:04:05:06");
        assert_eq!(fp.observations()[0].kind, NetworkKind::Ble);
    }

    #[test]
    fn duplicates_keep_strongest() {
        let fp = parse_fingerprint(
            r#"[{"SSID":"a","MAC":"aa:bb:cc:dd:ee:ff","RSSI":-70},{"SSID":"a","MAC":"AA:BB:CC:DD:EE:FF","RSSI":-55}]"#,
        )
        .unwrap();
        assert_eq!(fp.len(), 1);
        assert_eq!(fp.observations()[0].rssi, -55);
    }

    #[test]
    fn same_mac_different_kind_is_distinct() {
        let a = NetworkObservation::new("", mac("aa:bb:cc:dd:ee:ff"), -50, NetworkKind::Ble, 0);
        let b = NetworkObservation::new("", mac("aa:bb:cc:dd:ee:ff"), -50, NetworkKind::Wifi, 0);
        let fp = Fingerprint::from_observations([a, b]);
        assert_eq!(fp.len(), 2);
        assert_eq!(fp.observations()[0].kind, NetworkKind::Wifi);
    }

    #[test]
    fn errors_carry_offset_or_index() {
        match parse_fingerprint("[{\"MAC\": }]") {
            Err(FingerprintError::Json { offset, .. }) => assert_eq!(offset, 9),
            other => panic!("{other:?}"),
        }
        let bad_mac = r#"[{"SSID":"","MAC":"aa:bb:cc:dd:ee:ff","RSSI":-1},{"SSID":"","MAC":"zz","RSSI":-1}]"#;
        assert!(matches!(parse_fingerprint(bad_mac), Err(FingerprintError::Validation { index: 1, .. })));
        let bad_rssi = r#"[{"SSID":"","MAC":"aa:bb:cc:dd:ee:ff","RSSI":-121}]"#;
        assert!(matches!(parse_fingerprint(bad_rssi), Err(FingerprintError::Validation { index: 0, .. })));
        let positive = r#"[{"SSID":"","MAC":"aa:bb:cc:dd:ee:ff","RSSI":3}]"#;
        assert!(parse_fingerprint(positive).is_err());
    }

    #[test]
    fn serialization_order_and_keys() {
        assert_eq!(serialize_fingerprint(&Fingerprint::empty()), "[]");
        let fp = Fingerprint::from_observations([obs("bb:00:00:00:00:01", -40), obs("aa:00:00:00:00:01", -50)]);
        let text = serialize_fingerprint(&fp);
        let v: Value = serde_json::from_str(&text).unwrap();
        let arr = v.as_array().unwrap();
        assert_eq!(arr[0]["MAC"], "aa:00:00:00:00:01");
        for key in ["SSID", "MAC", "RSSI"] {
            assert!(arr[0].get(key).is_some(), "missing {key}");
        }
        assert_eq!(parse_fingerprint(&text).unwrap(), fp);
    }

    #[test]
    fn mac_canonicalization_is_idempotent() {
        let once = mac("AA-bb-CC-dd-EE-ff");
        assert_eq!(once.as_str(), "aa:bb:cc:dd:ee:ff");
        assert_eq!(mac(once.as_str()), once);
        assert_eq!(mac("AABBCCDDEEFF"), once);
        assert!(Mac::parse("aa:bb:cc:dd:ee").is_err());
        assert!(Mac::parse("aa:bb:cc:dd:ee:fg").is_err());
    }

    #[test]
    fn raw_threshold_examples() {
        let p = single(-70, 5, 2);
        let at = |r| match_raw(&Fingerprint::from_observations([obs("aa:bb:cc:dd:ee:ff", r)]), &p);
        let o = at(-60);
        assert!(o.satisfied_enter && o.satisfied_exit);
        let o = at(-73);
        assert!(!o.satisfied_enter && o.satisfied_exit);
        let o = match_raw(&Fingerprint::empty(), &p);
        assert!(!o.satisfied_enter && !o.satisfied_exit);
        assert_eq!(o.per_condition_best_rssi, vec![None]);
    }

    #[test]
    fn ssid_wildcard_and_kind_filter() {
        assert!(ssid_matches("Mall*", "Mall-Guest"));
        assert!(ssid_matches("Mall", "Mall"));
        assert!(!ssid_matches("Mall", "Mall-Guest"));
        assert!(ssid_matches("*", ""));
        let mut cond = NodeCondition::ssid("Mall*", -90);
        cond.kind = Some(NetworkKind::Ble);
        let wifi = NetworkObservation::new("Mall-1", mac("01:02:03:04:05:06"), -40, NetworkKind::Wifi, 0);
        assert!(!cond.matches(&wifi));
    }

    #[test]
    fn all_mode_requires_every_condition() {
        let mut p = single(-70, 5, 1);
        p.conditions.push(NodeCondition::mac(&mac("11:22:33:44:55:66"), -70));
        p.mode = MatchMode::All;
        let fp = Fingerprint::from_observations([obs("aa:bb:cc:dd:ee:ff", -50)]);
        assert!(!match_raw(&fp, &p).satisfied_enter);
        p.mode = MatchMode::Any;
        assert!(match_raw(&fp, &p).satisfied_enter);
    }

    #[test]
    fn hysteresis_hand_traced_sequence() {
        let seq = [-72, -69, -68, -71, -69, -74, -76, -77];
        assert_eq!(transitions(&seq, &single(-70, 5, 2)), vec![(2, true), (7, false)]);
        assert_eq!(
            transitions(&seq, &single(-70, 0, 1)),
            vec![(1, true), (3, false), (4, true), (5, false)]
        );
        assert_eq!(transitions(&[-60; 6], &single(-70, 5, 2)), vec![(1, true)]);
    }

    #[test]
    fn transition_records_seq() {
        let p = single(-70, 5, 1);
        let fp = Fingerprint::from_observations([obs("aa:bb:cc:dd:ee:ff", -50)]);
        let s = advance_match(MatchState::default(), &match_raw(&fp, &p), &p, 42);
        assert_eq!(s, MatchState { matched: true, streak: 0, last_transition_seq: 42 });
    }

    #[test]
    fn predicate_file_defaults_and_validation() {
        let preds = parse_predicates(
            r#"[{"id":"BIG_MALL","conditions":[{"matchBy":"MAC","pattern":"AA:BB:CC:DD:EE:FF"}]}]"#,
        )
        .unwrap();
        let p = &preds[0];
        assert_eq!(p.exit_margin_db, 5);
        assert_eq!(p.dwell_scans, 2);
        assert_eq!(p.mode, MatchMode::Any);
        assert_eq!(p.conditions[0].min_rssi, -90);
        assert_eq!(p.conditions[0].pattern, "aa:bb:cc:dd:ee:ff");

        let bad_id = r#"[{"id":"big mall","conditions":[{"matchBy":"SSID","pattern":"x"}]}]"#;
        assert!(matches!(parse_predicates(bad_id), Err(PredicateError::Invalid { .. })));
        let empty = r#"[{"id":"A","conditions":[]}]"#;
        assert!(parse_predicates(empty).is_err());
        let dup = r#"[{"id":"A","conditions":[{"matchBy":"SSID","pattern":"x"}]},{"id":"A","conditions":[{"matchBy":"SSID","pattern":"y"}]}]"#;
        assert!(parse_predicates(dup).is_err());
        assert!(matches!(parse_predicates("[{"), Err(PredicateError::Json { .. })));
    }
}
