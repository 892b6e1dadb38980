use std::sync::LazyLock;

use regex::{Captures, Regex};

use super::exceptions::extract_exceptions;
use super::{Scope, ScopeLevel};
use crate::aggregator::DefinitionUnit;
use crate::uslm::{DocumentGraph, NodeId, NodeKind, UslmError};

/// Phrases that open a scope declaration. The bare "In" form only counts at the
/// start of a sentence, so "as defined in this title" is not a declaration.
const LEAD: &str = r"(?:(?:^|[.:;—]\s*)in|for\s+(?:the\s+)?purposes?\s+of|(?:as|when)\s+used\s+in)";

static MULTI_SECTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i){LEAD}\s+sections\s+([0-9][0-9A-Za-z-]*)\s+(?:to|through)\s+([0-9][0-9A-Za-z-]*)(?:,?\s+inclusive,?)?\s+of\s+this\s+title\b"
    ))
    .unwrap()
});
static TITLE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i){LEAD}\s+this\s+title\b")).unwrap());
static CHAPTER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i){LEAD}\s+this\s+(chapter|subchapter|part|subpart|subtitle|division)\b"
    ))
    .unwrap()
});
static SECTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?i){LEAD}\s+this\s+section\b")).unwrap());
static SUBSECTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?i){LEAD}\s+(?:this\s+(subsection|paragraph|subparagraph|clause|subclause)\b|(subsection|paragraph|subparagraph|clause|subclause)\s+\(([0-9A-Za-z]+)\))"
    ))
    .unwrap()
});
static USC_TITLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^/us/usc/t[^/]+").unwrap());
static USC_SECTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^/us/usc/t[^/]+/s[^/]+").unwrap());

/// An explicit declaration found in a piece of text.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Declaration {
    pub level: ScopeLevel,
    pub targets: Vec<String>,
    /// More than one scope level was declared.
    pub conflict: bool,
}

fn rank(level: ScopeLevel) -> u8 {
    match level {
        ScopeLevel::Subsection => 0,
        ScopeLevel::Section => 1,
        ScopeLevel::MultiSection => 2,
        ScopeLevel::Chapter => 3,
        ScopeLevel::Title => 4,
        ScopeLevel::Inherited | ScopeLevel::Unknown => 5,
    }
}

fn title_prefix(graph: &DocumentGraph, at: NodeId) -> Option<String> {
    if let Some(t) = graph.enclosing(at, NodeKind::Title) {
        return Some(graph.nodes()[t.index()].identifier.clone());
    }
    let id = &graph.nodes()[at.index()].identifier;
    USC_TITLE.find(id).map(|m| m.as_str().to_string())
}

fn section_identifier(graph: &DocumentGraph, at: NodeId) -> Option<String> {
    if let Some(s) = graph.enclosing(at, NodeKind::Section) {
        return Some(graph.nodes()[s.index()].identifier.clone());
    }
    let id = &graph.nodes()[at.index()].identifier;
    USC_SECTION.find(id).map(|m| m.as_str().to_string())
}

/// Nearest node at or above `at` whose element name is `element`.
fn enclosing_element(graph: &DocumentGraph, at: NodeId, element: &str) -> Option<NodeId> {
    std::iter::once(at)
        .chain(graph.ancestors(at))
        .find(|n| graph.nodes()[n.index()].element.eq_ignore_ascii_case(element))
}

/// `paragraph (1)` resolved against the children of `at` and of each ancestor.
fn resolve_labeled(graph: &DocumentGraph, at: NodeId, element: &str, label: &str) -> Option<NodeId> {
    let wanted_num = format!("({label})");
    std::iter::once(at).chain(graph.ancestors(at)).find_map(|n| {
        graph.nodes()[n.index()].children.iter().copied().find(|c| {
            let child = &graph.nodes()[c.index()];
            child.element.eq_ignore_ascii_case(element)
                && (child.identifier.rsplit('/').next() == Some(label)
                    || child.num.as_deref() == Some(wanted_num.as_str()))
        })
    })
}

fn multi_section_targets(graph: &DocumentGraph, at: NodeId, c: &Captures<'_>) -> Vec<String> {
    let (from, to) = (&c[1], &c[2]);
    let Some(title) = title_prefix(graph, at) else {
        return vec![format!("{from}..{to}")];
    };
    let start = format!("{title}/s{from}");
    let end = format!("{title}/s{to}");
    if let (Some(a), Some(b)) = (graph.lookup(&start), graph.lookup(&end)) {
        if a <= b {
            let sections: Vec<String> = graph.nodes()[a.index()..=b.index()]
                .iter()
                .filter(|n| n.kind == NodeKind::Section)
                .map(|n| n.identifier.clone())
                .collect();
            if !sections.is_empty() {
                return sections;
            }
        }
    }
    vec![format!("{start}..{to}")]
}

/// Scope declarations in `text`, resolved relative to `at`. When several levels
/// are declared the narrowest wins and the conflict is flagged.
pub(crate) fn declaration_in(text: &str, graph: &DocumentGraph, at: NodeId) -> Option<Declaration> {
    let mut found: Vec<(ScopeLevel, Vec<String>)> = Vec::new();

    if let Some(c) = MULTI_SECTION.captures(text) {
        found.push((ScopeLevel::MultiSection, multi_section_targets(graph, at, &c)));
    }
    if TITLE.is_match(text) {
        let t = title_prefix(graph, at).unwrap_or_else(|| "this title".into());
        found.push((ScopeLevel::Title, vec![t]));
    }
    if let Some(c) = CHAPTER.captures(text) {
        let word = c[1].to_lowercase();
        let t = enclosing_element(graph, at, &word)
            .map(|n| graph.nodes()[n.index()].identifier.clone())
            .unwrap_or_else(|| format!("this {word}"));
        found.push((ScopeLevel::Chapter, vec![t]));
    }
    if SECTION.is_match(text) {
        let t = section_identifier(graph, at).unwrap_or_else(|| "this section".into());
        found.push((ScopeLevel::Section, vec![t]));
    }
    if let Some(c) = SUBSECTION.captures(text) {
        let t = if let Some(word) = c.get(1) {
            let word = word.as_str().to_lowercase();
            enclosing_element(graph, at, &word)
                .map(|n| graph.nodes()[n.index()].identifier.clone())
                .unwrap_or_else(|| format!("this {word}"))
        } else {
            let word = c[2].to_lowercase();
            let label = &c[3];
            resolve_labeled(graph, at, &word, label)
                .map(|n| graph.nodes()[n.index()].identifier.clone())
                .unwrap_or_else(|| format!("{word} ({label})"))
        };
        found.push((ScopeLevel::Subsection, vec![t]));
    }

    let conflict = found.len() > 1;
    found
        .into_iter()
        .min_by_key(|(level, _)| rank(*level))
        .map(|(level, targets)| Declaration {
            level,
            targets,
            conflict,
        })
}

/// Scope of a unit: declarations in the unit's own text or in the lead text
/// of its enclosing section; failing that, the nearest ancestor declaration.
pub fn detect_scope(unit: &DefinitionUnit, graph: &DocumentGraph) -> Result<Scope, UslmError> {
    graph.node(unit.anchor_id)?;
    let mut text = unit.combined_text.clone();
    if let Some(s) = graph.enclosing(unit.anchor_id, NodeKind::Section) {
        if s != unit.anchor_id {
            text.push_str(". ");
            text.push_str(&graph.nodes()[s.index()].lead_text());
        }
    }
    let mut scope = match declaration_in(&text, graph, unit.anchor_id) {
        Some(d) => Scope {
            level: d.level,
            targets: d.targets,
            explicit: true,
            exclusions: Vec::new(),
            conflict: d.conflict,
        },
        None => inherit_scope(unit, graph)?,
    };
    scope.exclusions = extract_exceptions(unit);
    Ok(scope)
}

/// Nearest ancestor declaration, marked as inherited.
pub fn inherit_scope(unit: &DefinitionUnit, graph: &DocumentGraph) -> Result<Scope, UslmError> {
    graph.node(unit.anchor_id)?;
    for a in graph.ancestors(unit.anchor_id) {
        let lead = graph.nodes()[a.index()].lead_text();
        if let Some(d) = declaration_in(&lead, graph, a) {
            return Ok(Scope {
                level: ScopeLevel::Inherited,
                targets: d.targets,
                explicit: false,
                exclusions: Vec::new(),
                conflict: d.conflict,
            });
        }
    }
    Ok(Scope::unknown())
}
