//! Defined terms, scope and exclusions of a definition unit.

mod bio;
mod exceptions;
mod scope;
mod terms;

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::aggregator::DefinitionUnit;
use crate::uslm::{CrossRef, DocumentGraph, UslmError};

pub use bio::{decode_bio, parse_bio_file, BioDecode, BioError, BioRecord, BioSpan};
pub use exceptions::extract_exceptions;
pub use scope::{detect_scope, inherit_scope};
pub use terms::extract_terms;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermMethod {
    QuotedPattern,
    UnquotedPattern,
    BioTags,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinedTerm {
    pub surface: String,
    /// Byte range of the surface within the unit text.
    pub char_span: (usize, usize),
    pub method: TermMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeLevel {
    Subsection,
    Section,
    MultiSection,
    Chapter,
    Title,
    Inherited,
    Unknown,
}

impl ScopeLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            ScopeLevel::Subsection => "subsection",
            ScopeLevel::Section => "section",
            ScopeLevel::MultiSection => "multi_section",
            ScopeLevel::Chapter => "chapter",
            ScopeLevel::Title => "title",
            ScopeLevel::Inherited => "inherited",
            ScopeLevel::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub text: String,
    pub refs: Vec<CrossRef>,
}

/// Where a definition applies.
///
/// Targets are USLM identifiers. A section range that could not be expanded
/// against the loaded document is kept as `"<title>/s<from>..<to>"`, and a
/// reference that could not be resolved at all is kept as its literal phrase
/// (`"paragraph (1)"`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scope {
    pub level: ScopeLevel,
    pub targets: Vec<String>,
    pub explicit: bool,
    pub exclusions: Vec<Exclusion>,
    /// The text declared more than one scope level; the narrowest was kept.
    #[serde(default)]
    pub conflict: bool,
}

impl Scope {
    pub fn unknown() -> Scope {
        Scope {
            level: ScopeLevel::Unknown,
            targets: Vec::new(),
            explicit: false,
            exclusions: Vec::new(),
            conflict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefinitionRecord {
    pub unit_id: String,
    pub identifier: String,
    pub terms: Vec<DefinedTerm>,
    pub scope: Scope,
    pub text: String,
    pub source_paragraph_ids: Vec<String>,
    pub score: f64,
    pub refs: Vec<CrossRef>,
}

impl DefinitionRecord {
    /// No defined term could be extracted.
    pub fn needs_review(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn to_line(&self) -> RecordLine {
        RecordLine {
            identifier: self.identifier.clone(),
            terms: self.terms.iter().map(|t| t.surface.clone()).collect(),
            scope: ScopeLine {
                level: self.scope.level,
                targets: self.scope.targets.clone(),
                explicit: self.scope.explicit,
                exclusions: self
                    .scope
                    .exclusions
                    .iter()
                    .map(|e| ExclusionLine {
                        text: e.text.clone(),
                        refs: e.refs.iter().map(|r| r.href.clone()).collect(),
                    })
                    .collect(),
            },
            text: self.text.clone(),
            source_paragraph_ids: self.source_paragraph_ids.clone(),
            score: self.score,
        }
    }

    /// Rebuild a record from its JSONL form. Term spans are located in the
    /// text; cross-references come from exclusion refs and from "section N of
    /// this title" citations in the text.
    pub fn from_line(line: RecordLine) -> DefinitionRecord {
        let terms = line
            .terms
            .iter()
            .map(|surface| {
                let start = line.text.find(surface.as_str()).unwrap_or(0);
                let end = if line.text.get(start..start + surface.len()) == Some(surface.as_str()) {
                    start + surface.len()
                } else {
                    start
                };
                let quoted = start > 0 && line.text[..start].ends_with('"');
                DefinedTerm {
                    surface: surface.clone(),
                    char_span: (start, end),
                    method: if quoted {
                        TermMethod::QuotedPattern
                    } else {
                        TermMethod::UnquotedPattern
                    },
                }
            })
            .collect();
        let mut refs = Vec::new();
        let mut seen = HashSet::new();
        for e in &line.scope.exclusions {
            for href in &e.refs {
                let r = CrossRef {
                    href: href.clone(),
                    anchor_text: String::new(),
                };
                if seen.insert(r.href.clone()) {
                    refs.push(r);
                }
            }
        }
        for r in cited_sections(&line.text, &line.identifier) {
            if seen.insert(r.href.clone()) {
                refs.push(r);
            }
        }
        let exclusions = line
            .scope
            .exclusions
            .into_iter()
            .map(|e| Exclusion {
                text: e.text,
                refs: e
                    .refs
                    .into_iter()
                    .map(|href| CrossRef {
                        href,
                        anchor_text: String::new(),
                    })
                    .collect(),
            })
            .collect();
        DefinitionRecord {
            unit_id: line.identifier.clone(),
            identifier: line.identifier,
            terms,
            scope: Scope {
                level: line.scope.level,
                targets: line.scope.targets,
                explicit: line.scope.explicit,
                exclusions,
                conflict: false,
            },
            text: line.text,
            source_paragraph_ids: line.source_paragraph_ids,
            score: line.score,
            refs,
        }
    }
}

/// One line of the extraction output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordLine {
    pub identifier: String,
    pub terms: Vec<String>,
    pub scope: ScopeLine,
    pub text: String,
    pub source_paragraph_ids: Vec<String>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScopeLine {
    pub level: ScopeLevel,
    pub targets: Vec<String>,
    pub explicit: bool,
    pub exclusions: Vec<ExclusionLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExclusionLine {
    pub text: String,
    pub refs: Vec<String>,
}

static CITATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bsection\s+([0-9][0-9A-Za-z-]*)(?:\([0-9A-Za-z]+\))*\s+of\s+this\s+title\b").unwrap()
});
static USC_TITLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^/us/usc/t[^/]+").unwrap());

/// "section 7601 of this title" style citations, resolved against the title of
/// `identifier`.
pub fn cited_sections(text: &str, identifier: &str) -> Vec<CrossRef> {
    let Some(title) = USC_TITLE.find(identifier) else {
        return Vec::new();
    };
    CITATION
        .captures_iter(text)
        .map(|c| CrossRef {
            href: format!("{}/s{}", title.as_str(), &c[1]),
            anchor_text: c[0].to_string(),
        })
        .collect()
}

/// Terms, scope and exclusions of one unit.
pub fn build_record(unit: &DefinitionUnit, graph: &DocumentGraph) -> Result<DefinitionRecord, UslmError> {
    Ok(DefinitionRecord {
        unit_id: unit.unit_id.clone(),
        identifier: unit.unit_id.clone(),
        terms: extract_terms(unit),
        scope: detect_scope(unit, graph)?,
        text: unit.combined_text.clone(),
        source_paragraph_ids: unit.member_identifiers.clone(),
        score: unit.score,
        refs: unit.refs.clone(),
    })
}
