//! Paragraph-level definition detection.
//!
//! Two score sources are supported: a binary rule-based scorer built from the
//! definitional phrasings common in the U.S. Code, and externally produced
//! classifier scores loaded from a tab-separated file. Scores are thresholded
//! into [`DetectionResult`]s.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize;
use crate::uslm::{DocumentGraph, NodeId, NodeKind};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("cannot read score file: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("line {line}: duplicate identifier {identifier}")]
    DuplicateIdentifier { line: usize, identifier: String },
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
}

/// One detection unit: a subdivision of a section that carries body text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphRecord {
    pub node_id: NodeId,
    pub identifier: String,
    /// Recursive text of the node and everything beneath it.
    pub text: String,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub node_id: NodeId,
    pub identifier: String,
    pub score: f64,
    pub is_definitional: bool,
    pub evidence: Vec<String>,
}

/// Paragraph records for every section subdivision that has chapeau or content
/// text, and for undivided sections with body text, in document order.
pub fn paragraph_records(graph: &DocumentGraph) -> Vec<ParagraphRecord> {
    graph
        .nodes()
        .iter()
        .filter(|n| n.has_body_text())
        .filter(|n| {
            n.kind.is_subdivision()
                || (n.kind == NodeKind::Section
                    && !n.children.iter().any(|c| graph.nodes()[c.index()].kind.is_subdivision()))
                || (n.kind == NodeKind::Other
                    && !n.is_organizational()
                    && graph.ancestors(n.id).any(|a| {
                        let k = graph.nodes()[a.index()].kind;
                        k == NodeKind::Section || k.is_subdivision()
                    }))
        })
        .map(|n| ParagraphRecord {
            node_id: n.id,
            identifier: n.identifier.clone(),
            text: graph.node_text(n.id, true).expect("node from this graph"),
            depth: graph.depth(n.id),
        })
        .collect()
}

const QUOTED_TERMS: &str = r#""[^"]+"(?:\s*,?\s*(?:and|or)?\s*"[^"]+")*"#;

static PATTERNS: LazyLock<Vec<(&'static str, Regex)>> = LazyLock::new(|| {
    let term = |tail: &str| {
        Regex::new(&format!(r"(?i)\bthe\s+terms?\s+{QUOTED_TERMS}\s+{tail}")).unwrap()
    };
    vec![
        ("term-means", term(r"means?\b")),
        ("term-includes", term(r"includes?\b")),
        ("term-excludes", term(r"(?:does|do)\s+not\s+include\b")),
        ("shall-mean", Regex::new(r"(?i)\bshall\s+mean\b").unwrap()),
        ("defined-as", Regex::new(r"(?i)\b(?:is|are)\s+defined\s+as\b").unwrap()),
        (
            "means-the-following",
            Regex::new(r"(?i)\bmeans\s+the\s+following\b").unwrap(),
        ),
        ("as-used-in", Regex::new(r"(?i)\bas\s+used\s+in\b").unwrap()),
        (
            "for-purposes-term",
            Regex::new(r"(?i)\bfor\s+(?:the\s+)?purposes?\s+of\b[^.]*?\bthe\s+terms?\b").unwrap(),
        ),
    ]
});

/// Names of the rule-based patterns, in evaluation order.
pub fn pattern_names() -> Vec<&'static str> {
    PATTERNS.iter().map(|(n, _)| *n).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternScore {
    pub score: f64,
    pub evidence: Vec<&'static str>,
}

/// Binary rule-based score: 1.0 when any definitional pattern matches.
pub fn pattern_score(text: &str) -> PatternScore {
    let text = normalize(text);
    let evidence: Vec<&'static str> = PATTERNS
        .iter()
        .filter(|(_, re)| re.is_match(&text))
        .map(|(name, _)| *name)
        .collect();
    PatternScore {
        score: if evidence.is_empty() { 0.0 } else { 1.0 },
        evidence,
    }
}

/// Scores keyed by identifier, loaded from an external classifier run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub scores: HashMap<String, f64>,
    /// Number of values that fell outside `[0, 1]` and were clamped.
    pub clamped: usize,
}

impl ScoreTable {
    pub fn get(&self, identifier: &str) -> Option<f64> {
        self.scores.get(identifier).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoreTable, DetectError> {
    let file = File::open(path)?;
    parse_scores(BufReader::new(file))
}

/// Parse `identifier<TAB>score` lines. `#` lines and blank lines are skipped.
pub fn parse_scores<R: BufRead>(reader: R) -> Result<ScoreTable, DetectError> {
    let mut table = ScoreTable::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, value) = line.split_once('\t').ok_or_else(|| DetectError::Format {
            line: line_no,
            message: "expected identifier<TAB>score".into(),
        })?;
        let id = id.trim();
        if id.is_empty() {
            return Err(DetectError::Format {
                line: line_no,
                message: "empty identifier".into(),
            });
        }
        let v: f64 = value.trim().parse().map_err(|_| DetectError::Format {
            line: line_no,
            message: format!("invalid score {:?}", value.trim()),
        })?;
        if v.is_nan() {
            return Err(DetectError::Format {
                line: line_no,
                message: "score is NaN".into(),
            });
        }
        let clamped = v.clamp(0.0, 1.0);
        if clamped != v {
            table.clamped += 1;
        }
        if table.scores.insert(id.to_string(), clamped).is_some() {
            return Err(DetectError::DuplicateIdentifier {
                line: line_no,
                identifier: id.to_string(),
            });
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy)]
pub enum ScoreSource<'a> {
    Patterns,
    External(&'a ScoreTable),
    MaxOfBoth(&'a ScoreTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub results: Vec<DetectionResult>,
    /// Paragraphs that had no external score and were scored 0.0.
    pub missing: usize,
}

impl Classification {
    pub fn positives(&self) -> impl Iterator<Item = &DetectionResult> {
        self.results.iter().filter(|r| r.is_definitional)
    }
}

/// Score and threshold every paragraph; output order matches input order.
pub fn classify(
    paragraphs: &[ParagraphRecord],
    source: ScoreSource<'_>,
    threshold: f64,
) -> Result<Classification, DetectError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(DetectError::InvalidThreshold(threshold));
    }
    let mut missing = 0;
    let results = paragraphs
        .iter()
        .map(|p| {
            let mut external = |table: &ScoreTable| match table.get(&p.identifier) {
                Some(s) => s,
                None => {
                    missing += 1;
                    0.0
                }
            };
            let (score, evidence) = match source {
                ScoreSource::Patterns => {
                    let ps = pattern_score(&p.text);
                    (ps.score, ps.evidence)
                }
                ScoreSource::External(table) => (external(table), Vec::new()),
                ScoreSource::MaxOfBoth(table) => {
                    let ps = pattern_score(&p.text);
                    (ps.score.max(external(table)), ps.evidence)
                }
            };
            DetectionResult {
                node_id: p.node_id,
                identifier: p.identifier.clone(),
                score,
                is_definitional: score >= threshold,
                evidence: evidence.into_iter().map(String::from).collect(),
            }
        })
        .collect();
    Ok(Classification { results, missing })
}
