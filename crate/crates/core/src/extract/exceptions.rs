use std::sync::LazyLock;

use regex::Regex;

use super::Exclusion;
use crate::aggregator::DefinitionUnit;

static DOES_NOT_INCLUDE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:does|do|shall)\s+not\s+include\s+").unwrap());

/// Byte offset where the sentence starting at `from` ends: the first `.` or `;`
/// outside parentheses that is followed by whitespace or the end of text and is
/// not part of a dotted abbreviation such as "U.S.C.".
fn sentence_end(text: &str, from: usize) -> usize {
    let bytes = text.as_bytes();
    let mut depth = 0i32;
    for (i, c) in text[from..].char_indices() {
        let i = from + i;
        match c {
            '(' => depth += 1,
            ')' => depth = (depth - 1).max(0),
            '.' | ';' if depth == 0 => {
                let next_ok = bytes.get(i + 1).is_none_or(|b| b.is_ascii_whitespace());
                let abbrev = c == '.'
                    && i >= 2
                    && bytes[i - 1].is_ascii_uppercase()
                    && (bytes[i - 2] == b'.' || bytes[i - 2] == b' ');
                if next_ok && !abbrev {
                    return i;
                }
            }
            _ => {}
        }
    }
    text.len()
}

/// Carve-outs introduced by "does not include", each running to the end of its
/// sentence, with the unit's cross-references that occur inside them.
pub fn extract_exceptions(unit: &DefinitionUnit) -> Vec<Exclusion> {
    let text = &unit.combined_text;
    DOES_NOT_INCLUDE
        .find_iter(text)
        .filter_map(|m| {
            let end = sentence_end(text, m.end());
            let mut clause = text[m.end()..end].trim();
            for tail in [",", " and", " or"] {
                clause = clause.strip_suffix(tail).unwrap_or(clause).trim_end();
            }
            if clause.is_empty() {
                return None;
            }
            let refs = unit
                .refs
                .iter()
                .filter(|r| !r.anchor_text.is_empty() && clause.contains(&r.anchor_text))
                .cloned()
                .collect();
            Some(Exclusion {
                text: clause.to_string(),
                refs,
            })
        })
        .collect()
}
