//! Core of a localhost gateway that turns radio fingerprints and phone
//! sensor streams into a context state, and adapts web pages to it.

pub mod adapt;
pub mod context;
pub mod fingerprint;
pub mod num;
pub mod ruledsl;
pub mod scan;
pub mod simulator;

pub use adapt::{adapt, enrich_url, extract_rules, AdaptMode, AdaptReport, Bindings, ExtractError};
pub use context::{build_context, ContextState, SensorWindow, Thresholds, TrackedPredicate};
pub use fingerprint::{
    parse_fingerprint, parse_predicates, serialize_fingerprint, Fingerprint, Mac, NetworkKind, NetworkObservation,
    ProximityPredicate,
};
pub use num::Real;
pub use ruledsl::{evaluate, parse as parse_rule, RuleAst, RuleError};
pub use scan::ScanPayload;
pub use simulator::{Environment, LogDistance, SimRng, Trace};

/// Path-loss model over `f64`, the precision used throughout the gateway.
pub type PathLoss = simulator::LogDistance<f64>;
/// Path-loss model over `f32` for memory-constrained callers.
pub type PathLoss32 = simulator::LogDistance<f32>;
