use std::path::Path;

use anyhow::{anyhow, Context};
use phyweb_core::adapt::{adapt, AdaptMode, AdaptReport, Bindings};
use phyweb_core::fingerprint::json_error_offset;
use phyweb_core::ContextState;
use phyweb_gateway::config::load_bindings;

use crate::{CmdResult, Failure, ModeArg};

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).with_context(|| path.display().to_string()).map_err(Failure::usage)
}

fn print_report(report: &AdaptReport) {
    for (label, entries) in [("shown", &report.shown), ("hidden", &report.hidden)] {
        for e in entries {
            let id = e.id.as_deref().unwrap_or("-");
            eprintln!("{label:<6} {id} [{}..{}] {}", e.span[0], e.span[1], e.expr);
        }
    }
    for e in &report.errors {
        eprintln!("error  byte {}: {} ({})", e.offset, e.message, e.expr);
    }
}

pub fn run(html_path: &Path, context_path: &Path, mode: ModeArg, bindings: Option<&Path>, json: bool) -> CmdResult {
    let html = read(html_path)?;
    let ctx_text = read(context_path)?;
    let state: ContextState = serde_json::from_str(&ctx_text)
        .map_err(|e| anyhow!("{}: invalid JSON at byte {}: {e}", context_path.display(), json_error_offset(&ctx_text, &e)))
        .map_err(Failure::usage)?;
    let bindings = match bindings {
        Some(p) => load_bindings(p).map_err(Failure::usage)?,
        None => Bindings::new(),
    };
    let mode = match mode {
        ModeArg::Css => AdaptMode::Css,
        ModeArg::Prune => AdaptMode::Prune,
    };
    let (out, report) = adapt(&html, &state, &state.networks, mode, &bindings)
        .map_err(|e| Failure::domain(anyhow!("{}: {e}", html_path.display())))?;
    print!("{out}");
    if json {
        eprintln!("{}", serde_json::to_string(&report).expect("report serializes"));
    } else {
        print_report(&report);
    }
    if report.errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::domain(anyhow!("{} rule error(s)", report.errors.len())))
    }
}
