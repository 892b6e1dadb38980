//! Definition network: records linked by cross-reference and in-scope term usage.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{DefinitionRecord, ScopeLevel};
use crate::uslm::identifier_within;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("duplicate unit id {0}")]
    DuplicateUnit(String),
    #[error("edge {src} -> {dst} references a missing node")]
    MissingEndpoint { src: String, dst: String },
    #[error("duplicate {kind:?} edge {src} -> {dst}")]
    DuplicateEdge { src: String, dst: String, kind: EdgeKind },
    #[error("invalid graph json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    CrossRef,
    TermUsage,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::CrossRef => "cross_ref",
            EdgeKind::TermUsage => "term_usage",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
    /// The matching href for cross-references, the matched text for term usage.
    pub evidence: String,
    /// The target definition has no known scope, so coverage was assumed.
    #[serde(default)]
    pub unscoped: bool,
}

impl Edge {
    pub fn key(&self) -> (&str, &str, EdgeKind) {
        (&self.src, &self.dst, self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DefinitionGraph {
    pub nodes: BTreeMap<String, DefinitionRecord>,
    /// Sorted by `(src, dst, kind)`, at most one edge per triple.
    pub edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    nodes: Vec<DefinitionRecord>,
    edges: Vec<Edge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Dot,
    Json,
}

/// Does a scope target cover `identifier`? Targets are identifier prefixes or
/// section ranges `"<title>/s<from>..<to>"`; literal phrases cover nothing.
pub fn target_covers(target: &str, identifier: &str) -> bool {
    match target.split_once("..") {
        None => target.starts_with('/') && identifier_within(identifier, target),
        Some((start, to)) => {
            let Some(slash) = start.rfind("/s") else {
                return false;
            };
            let (title, from) = (&start[..slash], &start[slash + 2..]);
            let Some(rest) = identifier.strip_prefix(title).and_then(|r| r.strip_prefix("/s")) else {
                return false;
            };
            let num = rest.split('/').next().unwrap_or("");
            section_cmp(from, num) != Ordering::Greater && section_cmp(num, to) != Ordering::Greater
        }
    }
}

/// Orders section numbers like "427", "427a", "427j" by leading number then suffix.
fn section_cmp(a: &str, b: &str) -> Ordering {
    fn split(s: &str) -> (Option<u64>, &str) {
        let end = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
        (s[..end].parse().ok(), &s[end..])
    }
    split(a).cmp(&split(b))
}

/// `Some(unscoped)` when `def`'s scope reaches the record anchored at `identifier`.
fn scope_reaches(def: &DefinitionRecord, identifier: &str) -> Option<bool> {
    if def.scope.level == ScopeLevel::Unknown || def.scope.targets.is_empty() {
        return Some(true);
    }
    def.scope
        .targets
        .iter()
        .any(|t| target_covers(t, identifier))
        .then_some(false)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Case-insensitive occurrences of `re` in `text` with no word character on
/// either side.
fn bounded_matches(re: &Regex, text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut at = 0;
    while let Some(m) = re.find_at(text, at) {
        let before_ok = text[..m.start()].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after_ok = text[m.end()..].chars().next().is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok && m.end() > m.start() {
            out.push((m.start(), m.end()));
            at = m.end();
        } else {
            at = m.start() + text[m.start()..].chars().next().map_or(1, char::len_utf8);
        }
        if at > text.len() {
            break;
        }
    }
    out
}

/// Link records by the two edge rules:
///
/// * `cross_ref` A→B when one of A's references points at or above B's anchor;
/// * `term_usage` A→B when a term defined by B occurs in A's text and B's
///   scope covers A's anchor. Longer terms are matched first and mask the text
///   they cover, so a nested shorter term does not also fire.
///
/// Self-edges are dropped. The result does not depend on input order.
pub fn build_network(records: &[DefinitionRecord]) -> Result<DefinitionGraph, NetworkError> {
    let mut nodes = BTreeMap::new();
    for r in records {
        if nodes.insert(r.unit_id.clone(), r.clone()).is_some() {
            return Err(NetworkError::DuplicateUnit(r.unit_id.clone()));
        }
    }

    let mut edges: BTreeMap<(String, String, EdgeKind), Edge> = BTreeMap::new();
    let mut add = |e: Edge| {
        if e.src != e.dst {
            edges.entry((e.src.clone(), e.dst.clone(), e.kind)).or_insert(e);
        }
    };

    for a in nodes.values() {
        let mut hrefs: Vec<&str> = a.refs.iter().map(|r| r.href.as_str()).collect();
        hrefs.sort_unstable();
        for href in hrefs {
            for b in nodes.values() {
                if identifier_within(&b.identifier, href) {
                    add(Edge {
                        src: a.unit_id.clone(),
                        dst: b.unit_id.clone(),
                        kind: EdgeKind::CrossRef,
                        evidence: href.to_string(),
                        unscoped: false,
                    });
                }
            }
        }
    }

    // term surface (lowercased) -> defining units
    let mut definers: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
    for r in nodes.values() {
        for t in &r.terms {
            if !t.surface.trim().is_empty() {
                definers.entry(t.surface.to_lowercase()).or_default().insert(&r.unit_id);
            }
        }
    }
    let mut terms: Vec<(&String, Regex)> = definers
        .keys()
        .map(|t| {
            let re = RegexBuilder::new(&regex::escape(t))
                .case_insensitive(true)
                .build()
                .expect("escaped literal");
            (t, re)
        })
        .collect();
    terms.sort_by(|x, y| y.0.len().cmp(&x.0.len()).then_with(|| x.0.cmp(y.0)));

    for a in nodes.values() {
        let mut masked: Vec<(usize, usize)> = Vec::new();
        for (term, re) in &terms {
            for (s, e) in bounded_matches(re, &a.text) {
                if masked.iter().any(|&(ms, me)| s < me && ms < e) {
                    continue;
                }
                masked.push((s, e));
                for &b in &definers[*term] {
                    let b = &nodes[b];
                    if let Some(unscoped) = scope_reaches(b, &a.identifier) {
                        add(Edge {
                            src: a.unit_id.clone(),
                            dst: b.unit_id.clone(),
                            kind: EdgeKind::TermUsage,
                            evidence: a.text[s..e].to_string(),
                            unscoped,
                        });
                    }
                }
            }
        }
    }

    Ok(DefinitionGraph {
        nodes,
        edges: edges.into_values().collect(),
    })
}

fn dot_quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl DefinitionGraph {
    pub fn edge_keys(&self) -> BTreeSet<(String, String, EdgeKind)> {
        self.edges
            .iter()
            .map(|e| (e.src.clone(), e.dst.clone(), e.kind))
            .collect()
    }

    /// Graphviz text: one line per node (labelled by its first term), one per
    /// edge (labelled by kind), plus the opening and closing lines.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph defnet {\n");
        for (id, r) in &self.nodes {
            let label = r.terms.first().map_or(id.as_str(), |t| t.surface.as_str());
            let _ = writeln!(out, "  {} [label={}];", dot_quote(id), dot_quote(label));
        }
        for e in &self.edges {
            let style = if e.unscoped { ", style=dashed" } else { "" };
            let _ = writeln!(
                out,
                "  {} -> {} [label={}{}];",
                dot_quote(&e.src),
                dot_quote(&e.dst),
                dot_quote(e.kind.as_str()),
                style
            );
        }
        out.push_str("}\n");
        out
    }

    /// `{"nodes": [record, ...], "edges": [edge, ...]}`.
    pub fn to_json(&self) -> String {
        let doc = GraphJson {
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("graph is always serializable")
    }

    pub fn from_json(s: &str) -> Result<DefinitionGraph, NetworkError> {
        let doc: GraphJson = serde_json::from_str(s)?;
        let mut nodes = BTreeMap::new();
        for r in doc.nodes {
            let id = r.unit_id.clone();
            if nodes.insert(id.clone(), r).is_some() {
                return Err(NetworkError::DuplicateUnit(id));
            }
        }
        let mut edges = doc.edges;
        for e in &edges {
            if !nodes.contains_key(&e.src) || !nodes.contains_key(&e.dst) {
                return Err(NetworkError::MissingEndpoint {
                    src: e.src.clone(),
                    dst: e.dst.clone(),
                });
            }
        }
        edges.sort_by(|x, y| x.key().cmp(&y.key()));
        if let Some(w) = edges.windows(2).find(|w| w[0].key() == w[1].key()) {
            return Err(NetworkError::DuplicateEdge {
                src: w[1].src.clone(),
                dst: w[1].dst.clone(),
                kind: w[1].kind,
            });
        }
        Ok(DefinitionGraph { nodes, edges })
    }
}

pub fn export_graph(g: &DefinitionGraph, format: GraphFormat) -> String {
    match format {
        GraphFormat::Dot => g.to_dot(),
        GraphFormat::Json => g.to_json(),
    }
}

pub fn import_graph_json(s: &str) -> Result<DefinitionGraph, NetworkError> {
    DefinitionGraph::from_json(s)
}
