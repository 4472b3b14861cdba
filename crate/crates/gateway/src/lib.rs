//! Localhost gateway: ingests scans, keeps the authoritative context state,
//! and serves it by pull, push, and notify-only delivery.

pub mod config;
pub mod http;
pub mod sim;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

pub use config::{ConfigError, GatewayConfig};
pub use http::{router, AppState};
pub use sim::SimBridge;
pub use store::{EventFrame, EventMode, Ingested, StateStore, Subscription};

/// A fully wired gateway ready to be served.
pub struct Gateway {
    pub state: AppState,
}

impl Gateway {
    pub fn new(store: StateStore, bindings: phyweb_core::adapt::Bindings, sim: Option<SimBridge>) -> Self {
        Gateway { state: AppState { store: Arc::new(store), bindings: Arc::new(bindings), sim: sim.map(Arc::new) } }
    }

    /// Loads bindings, predicates, and the optional simulator environment named by `config`.
    pub fn from_config(config: &GatewayConfig) -> Result<Self, ConfigError> {
        let bindings = config.load_bindings()?;
        let predicates = config.load_predicates()?;
        let store = StateStore::with_buffer(config.thresholds.clone(), predicates, config.subscriber_buffer);
        let sim = match &config.sim {
            Some(s) => match &s.env_path {
                Some(path) => {
                    let env = config::load_environment(path)?;
                    Some(SimBridge::new(env, s.seed, (s.start[0], s.start[1]), s.interval_ms))
                }
                None => None,
            },
            None => None,
        };
        Ok(Gateway::new(store, bindings, sim))
    }

    pub fn router(&self) -> axum::Router {
        http::router(self.state.clone())
    }

    /// Serves on `addr` in the background and starts the simulator ticker if
    /// one is configured. Returns the bound address.
    pub async fn start(&self, addr: SocketAddr) -> std::io::Result<RunningGateway> {
        let (addr, server) = http::spawn(addr, self.router()).await?;
        let ticker = self.state.sim.clone().map(|b| sim::spawn_ticker(b, self.state.store.clone()));
        Ok(RunningGateway { addr, server, ticker })
    }
}

pub struct RunningGateway {
    pub addr: SocketAddr,
    pub server: tokio::task::JoinHandle<()>,
    pub ticker: Option<tokio::task::JoinHandle<()>>,
}

impl RunningGateway {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(self) {
        self.server.abort();
        if let Some(t) = self.ticker {
            t.abort();
        }
    }
}
