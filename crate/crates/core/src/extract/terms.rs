use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;

use super::{DefinedTerm, TermMethod};
use crate::aggregator::DefinitionUnit;

static THE_TERM: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"(?i)\bthe\s+terms?\s+((?:"[^"]+"(?:\s*,?\s*(?:and|or)\s*|\s*,\s*)?)+)"#).unwrap()
});
static QUOTED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#""([^"]+)""#).unwrap());
static SHALL_MEAN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\s+shall\s+mean\b").unwrap());
static DEFINED_AS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bfor\s+(?:the\s+)?purposes?\s+of\s+[^,.;]+,\s*([^,.;]+?)\s+(?:is|are)\s+defined\s+as\b")
        .unwrap()
});
static QUOTE_MEANS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#""([^"]+)"\s+means\b"#).unwrap());

const MAX_UNQUOTED_WORDS: usize = 8;

/// Leading words that introduce, but are not part of, an unquoted definiendum.
const LEADING_NOISE: &[&str] = &["the term", "the terms", "term", "the", "a", "an"];

/// Trim a candidate phrase to the definiendum. Returns the byte range within
/// `text` and whether the phrase was quoted.
fn trim_candidate(text: &str, start: usize, end: usize) -> Option<(usize, usize, bool)> {
    let raw = &text[start..end];
    let lead = raw.len() - raw.trim_start().len();
    let (mut s, e) = (start + lead, start + raw.trim_end().len());
    if e <= s {
        return None;
    }
    let inner = &text[s..e];
    if inner.len() >= 2 && inner.starts_with('"') && inner.ends_with('"') {
        let (qs, qe) = (s + 1, e - 1);
        return (qe > qs && !text[qs..qe].contains('"')).then_some((qs, qe, true));
    }
    if inner.contains('"') {
        return None;
    }
    loop {
        let lower = text[s..e].to_lowercase();
        let Some(noise) = LEADING_NOISE
            .iter()
            .find(|n| lower.starts_with(*n) && lower[n.len()..].starts_with(' '))
        else {
            break;
        };
        s += noise.len() + 1;
    }
    let words = text[s..e].split_whitespace().count();
    (words > 0 && words <= MAX_UNQUOTED_WORDS).then_some((s, e, false))
}

/// Start of the clause that ends at `pos`: just after the last sentence or
/// clause delimiter.
fn clause_start(text: &str, pos: usize) -> usize {
    text[..pos]
        .rfind(['.', ';', ':', ',', ')', '\u{2014}'])
        .map(|i| i + 1)
        .unwrap_or(0)
}

/// Defined terms of a unit. Patterns are tried in priority order (quoted span
/// after "the term", `X shall mean`, `For purposes of ..., X is defined as`, a
/// quoted span before "means"); a lower-priority match overlapping a span that
/// is already taken is ignored. The result is deduplicated by surface and
/// ordered by first occurrence.
pub fn extract_terms(unit: &DefinitionUnit) -> Vec<DefinedTerm> {
    terms_in(&unit.combined_text)
}

pub(crate) fn terms_in(text: &str) -> Vec<DefinedTerm> {
    let mut found: Vec<DefinedTerm> = Vec::new();
    let accept = |start: usize, end: usize, method: TermMethod, found: &mut Vec<DefinedTerm>| {
        if found
            .iter()
            .any(|t| start < t.char_span.1 && t.char_span.0 < end)
        {
            return;
        }
        found.push(DefinedTerm {
            surface: text[start..end].to_string(),
            char_span: (start, end),
            method,
        });
    };

    for m in THE_TERM.captures_iter(text) {
        let list = m.get(1).unwrap();
        for q in QUOTED.captures_iter(list.as_str()) {
            let g = q.get(1).unwrap();
            let (s, e) = (list.start() + g.start(), list.start() + g.end());
            if let Some((s, e, _)) = trim_candidate(text, s, e) {
                accept(s, e, TermMethod::QuotedPattern, &mut found);
            }
        }
    }
    for m in SHALL_MEAN.find_iter(text) {
        let start = clause_start(text, m.start());
        if let Some((s, e, quoted)) = trim_candidate(text, start, m.start()) {
            accept(s, e, method_for(quoted), &mut found);
        }
    }
    for c in DEFINED_AS.captures_iter(text) {
        let g = c.get(1).unwrap();
        if let Some((s, e, quoted)) = trim_candidate(text, g.start(), g.end()) {
            accept(s, e, method_for(quoted), &mut found);
        }
    }
    for c in QUOTE_MEANS.captures_iter(text) {
        let g = c.get(1).unwrap();
        accept(g.start(), g.end(), TermMethod::QuotedPattern, &mut found);
    }

    found.sort_by_key(|t| t.char_span.0);
    let mut seen = HashSet::new();
    found.retain(|t| seen.insert(t.surface.clone()));
    found
}

fn method_for(quoted: bool) -> TermMethod {
    if quoted {
        TermMethod::QuotedPattern
    } else {
        TermMethod::UnquotedPattern
    }
}
