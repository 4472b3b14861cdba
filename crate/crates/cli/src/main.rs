//! `phyweb`: gateway, simulator, and offline adaptation in one binary.

mod adapt;
mod rules;
mod serve;
mod sim;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Failure carrying the process exit code: 1 for domain errors (rules,
/// adaptation, sink), 2 for usage and configuration errors.
#[derive(Debug)]
pub enum Failure {
    Domain(anyhow::Error),
    Usage(anyhow::Error),
}

impl Failure {
    pub fn domain(e: impl Into<anyhow::Error>) -> Self {
        Failure::Domain(e.into())
    }

    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(e.into())
    }
}

pub type CmdResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "phyweb", version, about = "Localhost physical-web gateway and tools")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Css,
    Prune,
}

#[derive(Subcommand)]
enum Command {
    /// Run the gateway.
    Serve {
        /// Listen port; 0 picks a free one.
        #[arg(long)]
        port: Option<u16>,
        /// Listen address.
        #[arg(long)]
        bind: Option<std::net::IpAddr>,
        /// Gateway config file; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Mount the simulator bridge using this environment file.
        #[arg(long, value_name = "ENV_JSON")]
        sim: Option<PathBuf>,
        /// Simulator noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Simulator scan interval in milliseconds.
        #[arg(long)]
        interval: Option<u64>,
    },
    /// Drive a trace through the radio model, or replay recorded scans.
    Sim {
        /// Beacon environment file.
        #[arg(long, required_unless_present = "replay", conflicts_with = "replay")]
        env: Option<PathBuf>,
        /// Device trace file.
        #[arg(long, required_unless_present = "replay", conflicts_with = "replay")]
        trace: Option<PathBuf>,
        /// Scan interval in milliseconds.
        #[arg(long, default_value_t = 1000)]
        interval: u64,
        /// Noise seed; equal seeds give identical scans.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gateway base URL to post scans to.
        #[arg(long, required_unless_present = "out")]
        post: Option<String>,
        /// Write scans as JSON lines instead of posting them.
        #[arg(long, conflicts_with_all = ["post", "replay"])]
        out: Option<PathBuf>,
        /// Re-send scans from a JSON lines file.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Print the run summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Adapt an HTML file offline against a context state file.
    Adapt {
        #[arg(long)]
        html: PathBuf,
        /// Context state JSON, as served by /api/v1/context.
        #[arg(long)]
        context: PathBuf,
        #[arg(long, value_enum, default_value = "css")]
        mode: ModeArg,
        /// Element id to rule bindings file.
        #[arg(long)]
        bindings: Option<PathBuf>,
        /// Print the report to stderr as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Parse every rule in HTML, bindings, or plain rule files.
    RulesCheck {
        /// .html/.htm, .json bindings, or one rule per line.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        /// Print findings as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Serve { port, bind, config, sim, seed, interval } => {
            serve::run(serve::Options { port, bind, config, sim, seed, interval })
        }
        Command::Sim { env, trace, interval, seed, post, out, replay, json } => {
            sim::run(sim::Options { env, trace, interval, seed, post, out, replay, json })
        }
        Command::Adapt { html, context, mode, bindings, json } => adapt::run(&html, &context, mode, bindings.as_deref(), json),
        Command::RulesCheck { paths, json } => rules::run(&paths, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
