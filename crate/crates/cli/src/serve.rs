use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use anyhow::Context;
use phyweb_gateway::config::SimSection;
use phyweb_gateway::http::{ENDPOINTS, SIM_ENDPOINTS};
use phyweb_gateway::{Gateway, GatewayConfig};

use crate::{CmdResult, Failure};

pub struct Options {
    pub port: Option<u16>,
    pub bind: Option<IpAddr>,
    pub config: Option<PathBuf>,
    pub sim: Option<PathBuf>,
    pub seed: Option<u64>,
    pub interval: Option<u64>,
}

/// Flags override the config file, which overrides defaults.
fn merged(opts: &Options) -> Result<GatewayConfig, Failure> {
    let mut cfg = match &opts.config {
        Some(path) => GatewayConfig::load(path).map_err(Failure::usage)?,
        None => GatewayConfig::default(),
    };
    if let Some(port) = opts.port {
        cfg.port = port;
    }
    if let Some(bind) = opts.bind {
        cfg.bind = bind;
    }
    if opts.sim.is_some() || opts.seed.is_some() || opts.interval.is_some() {
        let sim = cfg.sim.get_or_insert_with(SimSection::default);
        if let Some(env) = &opts.sim {
            sim.env_path = Some(env.clone());
        }
        if let Some(seed) = opts.seed {
            sim.seed = seed;
        }
        if let Some(interval) = opts.interval {
            sim.interval_ms = interval;
        }
    }
    cfg.validate().map_err(|e| Failure::usage(anyhow::anyhow!(e)))?;
    Ok(cfg)
}

pub fn run(opts: Options) -> CmdResult {
    let cfg = merged(&opts)?;
    let gateway = Gateway::from_config(&cfg).map_err(Failure::usage)?;
    let rt = tokio::runtime::Runtime::new().context("starting runtime").map_err(Failure::usage)?;
    rt.block_on(async {
        let addr = SocketAddr::new(cfg.bind, cfg.port);
        let running = gateway
            .start(addr)
            .await
            .with_context(|| format!("cannot listen on {addr}"))
            .map_err(Failure::usage)?;
        println!("listening on {}", running.base_url());
        let sim_on = gateway.state.sim.is_some();
        for e in ENDPOINTS.iter().chain(if sim_on { SIM_ENDPOINTS } else { &[] }) {
            println!("  {e}");
        }
        if !cfg.bind.is_loopback() {
            eprintln!("warning: bound to {}, the gateway has no authentication", cfg.bind);
        }
        tokio::signal::ctrl_c().await.context("waiting for shutdown signal").map_err(Failure::domain)?;
        running.stop();
        Ok(())
    })
}
