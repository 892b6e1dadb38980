//! End-to-end extraction: graph → paragraphs → detections → units → records.

use std::io::BufRead;

use thiserror::Error;

use crate::aggregator::{aggregate, AggregateError, AggregateOptions};
use crate::detector::{classify, paragraph_records, DetectError, DetectionResult, ParagraphRecord, ScoreSource};
use crate::extract::{build_record, DefinitionRecord};
use crate::uslm::{DocumentGraph, SectionStream, UslmError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Uslm(#[from] UslmError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

#[derive(Debug, Clone, Copy)]
pub struct PipelineOptions {
    pub threshold: f64,
    pub aggregate: AggregateOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            threshold: crate::detector::DEFAULT_THRESHOLD,
            aggregate: AggregateOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub records: Vec<DefinitionRecord>,
    pub paragraphs: Vec<ParagraphRecord>,
    pub detections: Vec<DetectionResult>,
    /// Paragraphs that had no external score.
    pub missing_scores: usize,
}

impl Extraction {
    fn append(&mut self, other: Extraction) {
        self.records.extend(other.records);
        self.paragraphs.extend(other.paragraphs);
        self.detections.extend(other.detections);
        self.missing_scores += other.missing_scores;
    }
}

pub fn extract_graph(
    graph: &DocumentGraph,
    source: ScoreSource<'_>,
    opts: PipelineOptions,
) -> Result<Extraction, PipelineError> {
    let paragraphs = paragraph_records(graph);
    let classification = classify(&paragraphs, source, opts.threshold)?;
    let units = aggregate(&paragraphs, &classification.results, graph, opts.aggregate)?;
    let records = units
        .iter()
        .map(|u| build_record(u, graph))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Extraction {
        records,
        paragraphs,
        detections: classification.results,
        missing_scores: classification.missing,
    })
}

/// Section-at-a-time extraction over an XML stream. Section ranges in scope
/// declarations are only expanded when both endpoints fall in the same section
/// graph; otherwise they stay as literal ranges.
pub fn extract_reader<R: BufRead>(
    reader: R,
    source: ScoreSource<'_>,
    opts: PipelineOptions,
) -> Result<Extraction, PipelineError> {
    let mut out = Extraction::default();
    for graph in SectionStream::new(reader) {
        out.append(extract_graph(&graph?, source, opts)?);
    }
    Ok(out)
}
