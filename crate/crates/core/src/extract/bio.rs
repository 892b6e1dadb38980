//! Decoding of BIO term tags produced by an external sequence labeler.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BioError {
    #[error("{tokens} tokens but {tags} tags")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error("unknown tag {tag:?} at position {index}")]
    UnknownTag { index: usize, tag: String },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("cannot read BIO file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tag {
    Outside,
    Begin,
    Inside,
}

fn parse_tag(index: usize, tag: &str) -> Result<Tag, BioError> {
    match tag {
        "O" => Ok(Tag::Outside),
        "B-TERM" => Ok(Tag::Begin),
        "I-TERM" => Ok(Tag::Inside),
        other => Err(BioError::UnknownTag {
            index,
            tag: other.to_string(),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BioSpan {
    pub surface: String,
    /// First token of the span.
    pub start: usize,
    /// One past the last token.
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BioDecode {
    pub spans: Vec<BioSpan>,
    /// `I-TERM` tags with no preceding `B-TERM`/`I-TERM`, decoded as span starts.
    pub repaired: usize,
}

/// Maximal `B-TERM I-TERM*` runs. A dangling `I-TERM` opens a new span.
pub fn decode_bio<S: AsRef<str>, T: AsRef<str>>(
    tokens: &[S],
    tags: &[T],
) -> Result<BioDecode, BioError> {
    if tokens.len() != tags.len() {
        return Err(BioError::LengthMismatch {
            tokens: tokens.len(),
            tags: tags.len(),
        });
    }
    let tags = tags
        .iter()
        .enumerate()
        .map(|(i, t)| parse_tag(i, t.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = BioDecode::default();
    let mut open: Option<usize> = None;
    let close = |start: usize, end: usize, out: &mut BioDecode| {
        let surface = tokens[start..end]
            .iter()
            .map(AsRef::as_ref)
            .collect::<Vec<_>>()
            .join(" ");
        out.spans.push(BioSpan {
            surface,
            start,
            end,
        });
    };
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::Outside => {
                if let Some(s) = open.take() {
                    close(s, i, &mut out);
                }
            }
            Tag::Begin => {
                if let Some(s) = open.replace(i) {
                    close(s, i, &mut out);
                }
            }
            Tag::Inside => {
                if open.is_none() {
                    out.repaired += 1;
                    open = Some(i);
                }
            }
        }
    }
    if let Some(s) = open {
        close(s, tags.len(), &mut out);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioRecord {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

/// Records of two tab-separated lines (tokens, then tags), separated by blank
/// lines.
pub fn parse_bio_file<R: BufRead>(reader: R) -> Result<Vec<BioRecord>, BioError> {
    let mut records = Vec::new();
    let mut pending: Vec<(usize, String)> = Vec::new();
    let flush = |pending: &mut Vec<(usize, String)>, records: &mut Vec<BioRecord>| {
        if pending.is_empty() {
            return Ok(());
        }
        if pending.len() != 2 {
            return Err(BioError::Format {
                line: pending[0].0,
                message: format!("record has {} lines, expected 2", pending.len()),
            });
        }
        let split = |s: &str| s.split('\t').map(str::to_string).collect::<Vec<_>>();
        let rec = BioRecord {
            tokens: split(&pending[0].1),
            tags: split(&pending[1].1),
        };
        if rec.tokens.len() != rec.tags.len() {
            return Err(BioError::Format {
                line: pending[1].0,
                message: format!("{} tokens but {} tags", rec.tokens.len(), rec.tags.len()),
            });
        }
        records.push(rec);
        pending.clear();
        Ok(())
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| BioError::Io(e.to_string()))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut pending, &mut records)?;
        } else {
            pending.push((i + 1, line.to_string()));
        }
    }
    flush(&mut pending, &mut records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_outside_decodes_to_nothing() {
        let d = decode_bio(&["a", "b"], &["O", "O"]).unwrap();
        assert!(d.spans.is_empty());
    }

    #[test]
    fn dangling_inside_is_repaired() {
        let d = decode_bio(&["a", "b", "c"], &["O", "I-TERM", "I-TERM"]).unwrap();
        assert_eq!(d.repaired, 1);
        assert_eq!(d.spans, [BioSpan { surface: "b c".into(), start: 1, end: 3 }]);
    }

    #[test]
    fn adjacent_begins_split_spans() {
        let d = decode_bio(&["a", "b"], &["B-TERM", "B-TERM"]).unwrap();
        assert_eq!(d.spans.len(), 2);
    }

    #[test]
    fn errors() {
        assert_eq!(
            decode_bio(&["a"], &["O", "O"]),
            Err(BioError::LengthMismatch { tokens: 1, tags: 2 })
        );
        assert_eq!(
            decode_bio(&["a"], &["B-DEF"]),
            Err(BioError::UnknownTag { index: 0, tag: "B-DEF".into() })
        );
    }

    #[test]
    fn file_records() {
        let text = "The\tterm\nO\tO\n\nX\tmeans\nB-TERM\tO\n";
        let recs = parse_bio_file(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].tags, ["B-TERM", "O"]);
        assert!(matches!(
            parse_bio_file("a\tb\nO\n".as_bytes()),
            Err(BioError::Format { line: 2, .. })
        ));
    }
}
