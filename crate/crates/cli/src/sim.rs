use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use phyweb_core::scan::ScanPayload;
use phyweb_core::simulator::{read_jsonl, replay, run_trace, JsonlSink, RunSummary, ScanSink, SimRng, SinkError, Trace};
use phyweb_gateway::config::load_environment;

use crate::{CmdResult, Failure};

pub struct Options {
    pub env: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub interval: u64,
    pub seed: u64,
    pub post: Option<String>,
    pub out: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub json: bool,
}

/// Posts scans to a running gateway.
struct HttpSink {
    client: reqwest::blocking::Client,
    base: String,
}

impl HttpSink {
    fn new(url: &str) -> Self {
        let base = url.trim_end_matches('/').trim_end_matches("/api/v1/scan").to_string();
        HttpSink { client: reqwest::blocking::Client::new(), base }
    }
}

impl ScanSink for HttpSink {
    fn emit(&mut self, payload: &ScanPayload) -> Result<Option<u64>, SinkError> {
        let resp = self
            .client
            .post(format!("{}/api/v1/scan", self.base))
            .json(payload)
            .send()
            .map_err(|e| SinkError(e.to_string()))?;
        if !resp.status().is_success() {
            let status = resp.status();
            return Err(SinkError(format!("{status}: {}", resp.text().unwrap_or_default())));
        }
        let seq = resp
            .headers()
            .get("x-phyweb-seq")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse().ok());
        Ok(seq)
    }

    fn current_seq(&mut self) -> Option<u64> {
        let v: serde_json::Value = self.client.get(format!("{}/api/v1/context", self.base)).send().ok()?.json().ok()?;
        v["seq"].as_u64()
    }
}

fn load_trace(path: &Path) -> Result<Trace, Failure> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string()).map_err(Failure::usage)?;
    let trace: Trace = serde_json::from_str(&text)
        .map_err(|e| {
            let offset = phyweb_core::fingerprint::json_error_offset(&text, &e);
            anyhow!("{}: invalid JSON at byte {offset}: {e}", path.display())
        })
        .map_err(Failure::usage)?;
    trace.validate().map_err(|e| Failure::usage(anyhow!("{}: {e}", path.display())))?;
    Ok(trace)
}

fn report(summary: RunSummary, json: bool) {
    if json {
        println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    } else {
        match summary.publishes {
            Some(p) => println!("steps {}, publishes {p}", summary.steps),
            None => println!("steps {}", summary.steps),
        }
    }
}

pub fn run(opts: Options) -> CmdResult {
    if opts.interval == 0 {
        return Err(Failure::usage(anyhow!("--interval must be positive")));
    }
    if let Some(path) = &opts.replay {
        let file = File::open(path).with_context(|| path.display().to_string()).map_err(Failure::usage)?;
        let payloads = read_jsonl(BufReader::new(file))
            .map_err(|e| Failure::usage(anyhow!("{}: {e}", path.display())))?;
        let url = opts.post.as_deref().ok_or_else(|| Failure::usage(anyhow!("--replay needs --post")))?;
        let summary = replay(&payloads, &mut HttpSink::new(url)).map_err(Failure::domain)?;
        report(summary, opts.json);
        return Ok(());
    }

    let (Some(env_path), Some(trace_path)) = (&opts.env, &opts.trace) else {
        return Err(Failure::usage(anyhow!("--env and --trace are required")));
    };
    let env = load_environment(env_path).map_err(Failure::usage)?;
    let trace = load_trace(trace_path)?;
    let mut rng = SimRng::seeded(opts.seed);
    let summary = match (&opts.out, &opts.post) {
        (Some(out), _) => {
            let file = File::create(out).with_context(|| out.display().to_string()).map_err(Failure::usage)?;
            let mut sink = JsonlSink::new(BufWriter::new(file));
            let summary = run_trace(&env, &trace, opts.interval, &mut sink, &mut rng).map_err(Failure::domain)?;
            sink.into_inner().flush().with_context(|| out.display().to_string()).map_err(Failure::domain)?;
            summary
        }
        (None, Some(url)) => run_trace(&env, &trace, opts.interval, &mut HttpSink::new(url), &mut rng).map_err(Failure::domain)?,
        (None, None) => return Err(Failure::usage(anyhow!("one of --post or --out is required"))),
    };
    report(summary, opts.json);
    Ok(())
}
