//! Rule extraction from HTML and context-driven adaptation.
//!
//! The scanner is tag-level and tolerant: it recognizes start/end tags,
//! comments, doctypes and raw-text elements, and never builds a tree. Edits
//! are made as byte-range splices so every byte outside an adapted start tag
//! (or a pruned element) is carried over verbatim.

use std::collections::BTreeMap;
use std::ops::Range;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{ContextState, LightLevel, Movement};
use crate::fingerprint::Fingerprint;
use crate::ruledsl::{self, evaluate, is_identifier, RuleAst};

pub const HIDDEN_CLASS: &str = "phyweb-hidden";
pub const HIDDEN_STYLE: &str = "<style>.phyweb-hidden{display:none !important}</style>";
pub const ATTR_WHEN: &str = "data-phyweb-when";
pub const ATTR_ZONE: &str = "data-phyweb-zone";
/// Legacy custom element accepted read-only; its `environment` attribute holds the rule.
pub const AMI_TAG: &str = "ami_adaptation";

const VOID_ELEMENTS: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "keygen", "link", "meta", "param", "source", "track",
    "wbr",
];
const RAW_TEXT_ELEMENTS: &[&str] = &["script", "style"];

/// Element id → rule expression.
pub type Bindings = BTreeMap<String, String>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("annotated <{tag}> at byte {offset} has no matching end tag")]
    Unbalanced { offset: usize, tag: String },
    #[error("annotated <{tag}> at byte {offset} partially overlaps another annotated element")]
    Overlap { offset: usize, tag: String },
}

impl ExtractError {
    pub fn offset(&self) -> usize {
        match self {
            ExtractError::Unbalanced { offset, .. } | ExtractError::Overlap { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SiteSource {
    AttrWhen,
    AttrZone,
    AmiTag,
    Binding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AdaptMode {
    #[default]
    Css,
    Prune,
}

impl std::str::FromStr for AdaptMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "css" => Ok(AdaptMode::Css),
            "prune" => Ok(AdaptMode::Prune),
            other => Err(format!("unknown adapt mode {other:?} (expected css or prune)")),
        }
    }
}

/// An element whose visibility is governed by a rule.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSite {
    /// Start tag through matching end tag.
    pub element_span: Range<usize>,
    pub start_tag: Range<usize>,
    pub tag_name: String,
    pub source: SiteSource,
    pub expr_text: String,
    pub ast: RuleAst,
    pub element_id: Option<String>,
}

/// An annotated element whose rule failed to parse or evaluate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SiteError {
    pub offset: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub expr: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub sites: Vec<RuleSite>,
    pub errors: Vec<SiteError>,
}

#[derive(Debug, Clone, PartialEq)]
struct Attr {
    name: String,
    /// Name start through value end (closing quote included).
    span: Range<usize>,
    /// Raw value bytes, quotes excluded.
    value_span: Option<Range<usize>>,
    quote: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
enum TagToken {
    Start { name: String, span: Range<usize>, attrs: Vec<Attr>, self_closing: bool },
    End { name: String, span: Range<usize> },
}

fn is_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0c)
}

fn find_from(hay: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    if from > hay.len() {
        return None;
    }
    hay[from..].windows(needle.len()).position(|w| w == needle).map(|p| p + from)
}

fn find_ci(hay: &[u8], from: usize, needle: &[u8]) -> Option<usize> {
    if from > hay.len() {
        return None;
    }
    hay[from..].windows(needle.len()).position(|w| w.eq_ignore_ascii_case(needle)).map(|p| p + from)
}

/// Parses the attribute list of a start tag beginning at `i` (just after the
/// tag name). Returns attributes, the index one past `>`, and self-closing.
fn scan_attrs(b: &[u8], mut i: usize) -> Option<(Vec<Attr>, usize, bool)> {
    let mut attrs = Vec::new();
    loop {
        while i < b.len() && is_space(b[i]) {
            i += 1;
        }
        match b.get(i)? {
            b'>' => return Some((attrs, i + 1, false)),
            b'/' if b.get(i + 1) == Some(&b'>') => return Some((attrs, i + 2, true)),
            b'/' => {
                i += 1;
                continue;
            }
            _ => {}
        }
        let name_start = i;
        while i < b.len() && !is_space(b[i]) && !matches!(b[i], b'=' | b'>') && !(b[i] == b'/' && i > name_start) {
            i += 1;
        }
        let name = String::from_utf8_lossy(&b[name_start..i]).to_ascii_lowercase();
        let mut j = i;
        while j < b.len() && is_space(b[j]) {
            j += 1;
        }
        if b.get(j) == Some(&b'=') {
            j += 1;
            while j < b.len() && is_space(b[j]) {
                j += 1;
            }
            match b.get(j)? {
                &q @ (b'"' | b'\'') => {
                    let close = find_from(b, j + 1, &[q])?;
                    attrs.push(Attr {
                        name,
                        span: name_start..close + 1,
                        value_span: Some(j + 1..close),
                        quote: Some(q),
                    });
                    i = close + 1;
                }
                _ => {
                    let vs = j;
                    while j < b.len() && !is_space(b[j]) && b[j] != b'>' {
                        j += 1;
                    }
                    attrs.push(Attr { name, span: name_start..j, value_span: Some(vs..j), quote: None });
                    i = j;
                }
            }
        } else {
            attrs.push(Attr { name, span: name_start..i, value_span: None, quote: None });
        }
    }
}

fn tag_name_end(b: &[u8], mut i: usize) -> usize {
    while i < b.len() && !is_space(b[i]) && !matches!(b[i], b'/' | b'>') {
        i += 1;
    }
    i
}

/// Tag-level scan. Unterminated constructs end the scan.
fn scan_tags(html: &str) -> Vec<TagToken> {
    let b = html.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(lt) = find_from(b, i, b"<") {
        i = lt;
        let next = b.get(i + 1).copied();
        if b[i..].starts_with(b"<!--") {
            match find_from(b, i + 4, b"-->") {
                Some(end) => i = end + 3,
                None => break,
            }
        } else if matches!(next, Some(b'!' | b'?')) {
            match find_from(b, i + 2, b">") {
                Some(end) => i = end + 1,
                None => break,
            }
        } else if next == Some(b'/') {
            let mut n = i + 2;
            while n < b.len() && is_space(b[n]) {
                n += 1;
            }
            if !b.get(n).is_some_and(u8::is_ascii_alphabetic) {
                i += 1;
                continue;
            }
            let name_end = tag_name_end(b, n);
            let Some(gt) = find_from(b, name_end, b">") else { break };
            let name = String::from_utf8_lossy(&b[n..name_end]).to_ascii_lowercase();
            out.push(TagToken::End { name, span: i..gt + 1 });
            i = gt + 1;
        } else if next.is_some_and(|c| c.is_ascii_alphabetic()) {
            let name_end = tag_name_end(b, i + 1);
            let name = String::from_utf8_lossy(&b[i + 1..name_end]).to_ascii_lowercase();
            let Some((attrs, end, self_closing)) = scan_attrs(b, name_end) else { break };
            let raw = RAW_TEXT_ELEMENTS.contains(&name.as_str()) && !self_closing;
            out.push(TagToken::Start { name: name.clone(), span: i..end, attrs, self_closing });
            i = end;
            if raw {
                let closing = format!("</{name}");
                match find_ci(b, i, closing.as_bytes()) {
                    Some(p) => i = p,
                    None => break,
                }
            }
        } else {
            i += 1;
        }
    }
    out
}

fn attr_value<'a>(html: &'a str, attrs: &[Attr], name: &str) -> Option<&'a str> {
    attrs
        .iter()
        .find(|a| a.name == name)
        .map(|a| a.value_span.clone().map_or("", |r| &html[r]))
}

/// Decodes the character references that can appear in attribute values.
fn decode_entities(raw: &str) -> String {
    if !raw.contains('&') {
        return raw.to_string();
    }
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let semi = rest.find(';').filter(|&s| s <= 10);
        let decoded = semi.and_then(|s| {
            let name = &rest[1..s];
            let ch = match name {
                "lt" => Some('<'),
                "gt" => Some('>'),
                "amp" => Some('&'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                _ if name.starts_with("#x") || name.starts_with("#X") => {
                    u32::from_str_radix(&name[2..], 16).ok().and_then(char::from_u32)
                }
                _ if name.starts_with('#') => name[1..].parse().ok().and_then(char::from_u32),
                _ => None,
            };
            ch.map(|c| (c, s + 1))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn zone_expr(id: &str) -> String {
    if is_identifier(id) {
        format!("zone({id})")
    } else {
        format!("zone({})", ruledsl::format(&ruledsl::Expr::lit_text(id)))
    }
}

struct Annotated {
    token_index: usize,
    source: SiteSource,
    expr_text: String,
}

/// Precedence when several annotations apply: `when`, then `zone`, then the
/// legacy tag, then a binding on the element id.
fn annotation(html: &str, name: &str, attrs: &[Attr], bindings: &Bindings) -> Option<(SiteSource, String)> {
    if let Some(v) = attr_value(html, attrs, ATTR_WHEN) {
        return Some((SiteSource::AttrWhen, decode_entities(v)));
    }
    if let Some(v) = attr_value(html, attrs, ATTR_ZONE) {
        return Some((SiteSource::AttrZone, zone_expr(decode_entities(v).trim())));
    }
    if name == AMI_TAG {
        if let Some(v) = attr_value(html, attrs, "environment") {
            return Some((SiteSource::AmiTag, decode_entities(v)));
        }
    }
    let id = attr_value(html, attrs, "id").map(decode_entities)?;
    bindings.get(&id).map(|e| (SiteSource::Binding, e.clone()))
}

/// Finds every annotated or bound element, in document order.
pub fn extract_rules(html: &str, bindings: &Bindings) -> Result<Extraction, ExtractError> {
    let tokens = scan_tags(html);
    let mut annotated = Vec::new();
    for (idx, tok) in tokens.iter().enumerate() {
        if let TagToken::Start { name, attrs, .. } = tok {
            if let Some((source, expr_text)) = annotation(html, name, attrs, bindings) {
                annotated.push(Annotated { token_index: idx, source, expr_text });
            }
        }
    }

    let mut spans = Vec::with_capacity(annotated.len());
    for a in &annotated {
        let TagToken::Start { name, span, self_closing, .. } = &tokens[a.token_index] else { unreachable!() };
        let end = if *self_closing || VOID_ELEMENTS.contains(&name.as_str()) {
            span.end
        } else {
            matching_end(&tokens, a.token_index).ok_or_else(|| ExtractError::Unbalanced {
                offset: span.start,
                tag: name.clone(),
            })?
        };
        spans.push((span.start..end, name.clone()));
    }
    check_nesting(&spans)?;

    let mut extraction = Extraction::default();
    for (a, (element_span, tag_name)) in annotated.into_iter().zip(spans) {
        let TagToken::Start { span, attrs, .. } = &tokens[a.token_index] else { unreachable!() };
        let element_id = attr_value(html, attrs, "id").map(decode_entities);
        match ruledsl::parse(&a.expr_text) {
            Ok(ast) => extraction.sites.push(RuleSite {
                element_span,
                start_tag: span.clone(),
                tag_name,
                source: a.source,
                expr_text: a.expr_text,
                ast,
                element_id,
            }),
            Err(e) => extraction.errors.push(SiteError {
                offset: span.start,
                id: element_id,
                expr: a.expr_text,
                message: e.to_string(),
            }),
        }
    }
    Ok(extraction)
}

fn matching_end(tokens: &[TagToken], start: usize) -> Option<usize> {
    let TagToken::Start { name: target, .. } = &tokens[start] else { return None };
    let mut depth = 1usize;
    for tok in &tokens[start + 1..] {
        match tok {
            TagToken::Start { name, self_closing: false, .. } if name == target => depth += 1,
            TagToken::End { name, span } if name == target => {
                depth -= 1;
                if depth == 0 {
                    return Some(span.end);
                }
            }
            _ => {}
        }
    }
    None
}

fn check_nesting(spans: &[(Range<usize>, String)]) -> Result<(), ExtractError> {
    let mut stack: Vec<&Range<usize>> = Vec::new();
    for (span, tag) in spans {
        while stack.last().is_some_and(|top| top.end <= span.start) {
            stack.pop();
        }
        if let Some(top) = stack.last() {
            if span.end > top.end {
                return Err(ExtractError::Overlap { offset: span.start, tag: tag.clone() });
            }
        }
        stack.push(span);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SiteEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub span: [usize; 2],
    pub expr: String,
}

impl SiteEntry {
    fn of(site: &RuleSite) -> Self {
        SiteEntry {
            id: site.element_id.clone(),
            span: [site.element_span.start, site.element_span.end],
            expr: site.expr_text.clone(),
        }
    }
}

/// Which sites ended up visible or hidden. A site inside a hidden site is
/// reported hidden in both modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct AdaptReport {
    pub mode: AdaptMode,
    pub shown: Vec<SiteEntry>,
    pub hidden: Vec<SiteEntry>,
    pub errors: Vec<SiteError>,
}

impl AdaptReport {
    pub fn hidden_ids(&self) -> Vec<String> {
        self.hidden.iter().filter_map(|e| e.id.clone()).collect()
    }
}

struct Edit {
    range: Range<usize>,
    text: String,
}

fn apply_edits(html: &str, mut edits: Vec<Edit>) -> String {
    edits.sort_by_key(|e| (e.range.start, e.range.end));
    let mut out = String::with_capacity(html.len() + 64);
    let mut cursor = 0;
    for e in edits {
        if e.range.start < cursor {
            continue;
        }
        out.push_str(&html[cursor..e.range.start]);
        out.push_str(&e.text);
        cursor = e.range.end;
    }
    out.push_str(&html[cursor..]);
    out
}

/// Rewrites one start tag so that it carries (or drops) the hidden class.
fn with_hidden_class(tag: &str, hidden: bool) -> String {
    let b = tag.as_bytes();
    let attrs = scan_attrs(b, tag_name_end(b, 1)).map(|(a, _, _)| a).unwrap_or_default();
    let class = attrs.into_iter().find(|a| a.name == "class");
    let has = class
        .as_ref()
        .and_then(|a| a.value_span.clone())
        .is_some_and(|r| tag[r].split_ascii_whitespace().any(|c| c == HIDDEN_CLASS));
    match (hidden, class) {
        (true, _) if has => tag.to_string(),
        (true, None) => {
            let close = if tag.ends_with("/>") { tag.len() - 2 } else { tag.len() - 1 };
            format!("{} class=\"{HIDDEN_CLASS}\"{}", &tag[..close], &tag[close..])
        }
        (true, Some(attr)) => {
            let value = attr.value_span.clone().map_or("", |r| &tag[r]);
            let new_value = if value.trim().is_empty() { HIDDEN_CLASS.to_string() } else { format!("{value} {HIDDEN_CLASS}") };
            let q = attr.quote.unwrap_or(b'"') as char;
            format!("{}class={q}{new_value}{q}{}", &tag[..attr.span.start], &tag[attr.span.end..])
        }
        (false, Some(attr)) if has => {
            let value = &tag[attr.value_span.clone().unwrap()];
            let kept: Vec<&str> = value.split_ascii_whitespace().filter(|c| *c != HIDDEN_CLASS).collect();
            if kept.is_empty() {
                let mut start = attr.span.start;
                while start > 0 && is_space(b[start - 1]) {
                    start -= 1;
                }
                format!("{}{}", &tag[..start], &tag[attr.span.end..])
            } else {
                let q = attr.quote.unwrap_or(b'"') as char;
                format!("{}class={q}{}{q}{}", &tag[..attr.span.start], kept.join(" "), &tag[attr.span.end..])
            }
        }
        (false, _) => tag.to_string(),
    }
}

fn style_insertion_point(html: &str) -> usize {
    scan_tags(html)
        .into_iter()
        .find_map(|t| match t {
            TagToken::End { name, span } if name == "head" => Some(span.start),
            _ => None,
        })
        .unwrap_or(0)
}

/// Applies every site's rule to `html`. In CSS mode false sites gain the
/// hidden class and a single style block is added; in prune mode false sites
/// are cut out, outermost first.
pub fn adapt(
    html: &str,
    state: &ContextState,
    networks: &Fingerprint,
    mode: AdaptMode,
    bindings: &Bindings,
) -> Result<(String, AdaptReport), ExtractError> {
    let extraction = extract_rules(html, bindings)?;
    let mut report = AdaptReport { mode, errors: extraction.errors, ..Default::default() };
    if extraction.sites.is_empty() {
        return Ok((html.to_string(), report));
    }

    let verdict = |site: &RuleSite, report: &mut AdaptReport| match evaluate(&site.ast, state, networks) {
        Ok(v) => v,
        Err(e) => {
            report.errors.push(SiteError {
                offset: site.start_tag.start,
                id: site.element_id.clone(),
                expr: site.expr_text.clone(),
                message: e.to_string(),
            });
            false
        }
    };

    let mut edits = Vec::new();
    match mode {
        AdaptMode::Css => {
            let mut hidden_until = 0usize;
            for site in &extraction.sites {
                let visible = verdict(site, &mut report);
                let tag = &html[site.start_tag.clone()];
                let rewritten = with_hidden_class(tag, !visible);
                if rewritten != tag {
                    edits.push(Edit { range: site.start_tag.clone(), text: rewritten });
                }
                let inside_hidden = site.element_span.start < hidden_until;
                if visible && !inside_hidden {
                    report.shown.push(SiteEntry::of(site));
                } else {
                    report.hidden.push(SiteEntry::of(site));
                    if !inside_hidden {
                        hidden_until = site.element_span.end;
                    }
                }
            }
            if !html.contains(HIDDEN_STYLE) {
                let at = style_insertion_point(html);
                edits.push(Edit { range: at..at, text: HIDDEN_STYLE.to_string() });
            }
        }
        AdaptMode::Prune => {
            let mut removed_until = 0usize;
            for site in &extraction.sites {
                if site.element_span.start < removed_until {
                    report.hidden.push(SiteEntry::of(site));
                    continue;
                }
                if verdict(site, &mut report) {
                    report.shown.push(SiteEntry::of(site));
                } else {
                    report.hidden.push(SiteEntry::of(site));
                    edits.push(Edit { range: site.element_span.clone(), text: String::new() });
                    removed_until = site.element_span.end;
                }
            }
        }
    }
    Ok((apply_edits(html, edits), report))
}

/// Result of [`enrich_url`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enriched {
    pub url: String,
    /// False when the input could not be understood as a URL; `url` is then the input.
    pub parsed: bool,
}

/// Query-value encoding: everything except unreserved characters.
const QUERY_VALUE: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.').remove(b'~');

pub const ENRICH_PREFIX: &str = "pw_";

fn enrich_params(state: &ContextState) -> Vec<(&'static str, String)> {
    let enc = |s: &str| utf8_percent_encode(s, QUERY_VALUE).to_string();
    let mut params = Vec::new();
    if state.movement != Movement::Unknown {
        params.push(("pw_move", enc(state.movement.as_str())));
    }
    if let Some(db) = state.noise_db {
        params.push(("pw_noise_db", format!("{}", db.round() as i64)));
    }
    if state.light != LightLevel::Unknown {
        params.push(("pw_light", enc(state.light.as_str())));
    }
    let zones = state.active_zones();
    if !zones.is_empty() {
        params.push(("pw_zones", zones.iter().map(|z| enc(z)).collect::<Vec<_>>().join(",")));
    }
    params
}

/// Appends the known context fields as `pw_*` query parameters.
pub fn enrich_url(url: &str, state: &ContextState) -> Enriched {
    let unchanged = |parsed| Enriched { url: url.to_string(), parsed };
    if url.is_empty() || url.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return unchanged(false);
    }
    let (base, fragment) = match url.find('#') {
        Some(i) => (&url[..i], &url[i..]),
        None => (url, ""),
    };
    if has_scheme(base) && url::Url::parse(url).is_err() {
        return unchanged(false);
    }
    let query = base.find('?').map(|i| &base[i + 1..]);
    if query.is_some_and(|q| q.split('&').any(|kv| kv.starts_with(ENRICH_PREFIX))) {
        return unchanged(true);
    }
    let params = enrich_params(state);
    if params.is_empty() {
        return unchanged(true);
    }
    let base = with_root_path(base);
    let sep = match query {
        None => "?",
        Some("") => "",
        Some(q) if q.ends_with('&') => "",
        Some(_) => "&",
    };
    let joined = params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("&");
    Enriched { url: format!("{base}{sep}{joined}{fragment}"), parsed: true }
}

/// `scheme://host` gains the empty path `/` so parameters follow `host/?`.
fn with_root_path(base: &str) -> std::borrow::Cow<'_, str> {
    let Some(i) = base.find("://") else {
        return base.into();
    };
    let after = i + 3;
    let end = base[after..].find(['/', '?']).map_or(base.len(), |j| after + j);
    if base[end..].starts_with('/') {
        base.into()
    } else {
        format!("{}/{}", &base[..end], &base[end..]).into()
    }
}

fn has_scheme(s: &str) -> bool {
    match s.find(':') {
        Some(i) if i > 0 => {
            let scheme = &s[..i];
            scheme.starts_with(|c: char| c.is_ascii_alphabetic())
                && scheme.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '+' | '-' | '.'))
                && !s[..i].contains('/')
        }
        _ => false,
    }
}
