use std::path::{Path, PathBuf};

use anyhow::anyhow;
use phyweb_core::adapt::{extract_rules, Bindings};
use phyweb_core::ruledsl;
use serde::Serialize;

use crate::{CmdResult, Failure};

#[derive(Serialize)]
struct Finding {
    path: PathBuf,
    /// Where the rule sits: byte offset in HTML, binding id, or line number.
    location: String,
    expr: String,
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn kind_of(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("html" | "htm") => "html",
        Some("json") => "json",
        _ => "lines",
    }
}

fn check_file(path: &Path, text: &str) -> Vec<Finding> {
    let finding = |location: String, expr: &str, error: Option<String>| Finding {
        path: path.to_owned(),
        location,
        expr: expr.to_string(),
        ok: error.is_none(),
        error,
    };
    match kind_of(path) {
        "html" => match extract_rules(text, &Bindings::new()) {
            Ok(ex) => {
                let mut out: Vec<(usize, Finding)> = ex
                    .sites
                    .iter()
                    .map(|s| (s.start_tag.start, finding(format!("byte {}", s.start_tag.start), &s.expr_text, None)))
                    .collect();
                out.extend(ex.errors.iter().map(|e| (e.offset, finding(format!("byte {}", e.offset), &e.expr, Some(e.message.clone())))));
                out.sort_by_key(|(o, _)| *o);
                out.into_iter().map(|(_, f)| f).collect()
            }
            Err(e) => vec![finding(format!("byte {}", e.offset()), "", Some(e.to_string()))],
        },
        "json" => match serde_json::from_str::<Bindings>(text) {
            Ok(b) => b
                .iter()
                .map(|(id, expr)| finding(format!("id {id}"), expr, ruledsl::parse(expr).err().map(|e| e.to_string())))
                .collect(),
            Err(e) => {
                let offset = phyweb_core::fingerprint::json_error_offset(text, &e);
                vec![finding(format!("byte {offset}"), "", Some(format!("invalid bindings JSON: {e}")))]
            }
        },
        _ => text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|(i, line)| {
                let err = ruledsl::parse(line).err();
                let location = match &err {
                    Some(e) => format!("line {} col {}", i + 1, line[..e.offset().min(line.len())].chars().count() + 1),
                    None => format!("line {}", i + 1),
                };
                finding(location, line.trim(), err.map(|e| e.to_string()))
            })
            .collect(),
    }
}

pub fn run(paths: &[PathBuf], json: bool) -> CmdResult {
    let mut findings = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(anyhow!("{}: {e}", path.display())))?;
        findings.extend(check_file(path, &text));
    }
    let failed = findings.iter().filter(|f| !f.ok).count();
    if json {
        println!("{}", serde_json::to_string_pretty(&findings).expect("findings serialize"));
    } else {
        for f in &findings {
            match &f.error {
                None => println!("{}: {}: OK {}", f.path.display(), f.location, f.expr),
                Some(e) => println!("{}: {}: ERROR {e}", f.path.display(), f.location),
            }
        }
        println!("{} rule(s), {failed} error(s)", findings.len());
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::domain(anyhow!("{failed} rule error(s)")))
    }
}
