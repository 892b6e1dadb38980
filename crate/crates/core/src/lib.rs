//! Extraction of statutory definitions from USLM XML.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! 1. [`uslm`] parses the XML into a [`DocumentGraph`] that keeps the statutory hierarchy.
//! 2. [`detector`] scores paragraphs as definitional.
//! 3. [`aggregator`] merges related definitional paragraphs into [`DefinitionUnit`]s.
//! 4. [`extract`] pulls defined terms, scope and exclusions out of each unit.
//! 5. [`network`] links the resulting records by cross-reference and term usage.
//!
//! [`attention`] holds a small dense implementation of the hierarchical and graph
//! attention used by the neural detector, and [`eval`] the precision/recall
//! metrics used to compare detectors.

pub mod aggregator;
pub mod attention;
pub mod detector;
pub mod eval;
pub mod extract;
pub mod network;
pub mod pipeline;
pub mod text;
pub mod uslm;

pub use aggregator::{aggregate, AggregateOptions, DefinitionUnit};
pub use detector::{classify, pattern_score, DetectionResult, ParagraphRecord, ScoreSource};
pub use extract::{DefinedTerm, DefinitionRecord, Exclusion, Scope, ScopeLevel};
pub use network::{build_network, DefinitionGraph, Edge, EdgeKind};
pub use pipeline::{extract_graph, extract_reader, Extraction, PipelineOptions};
pub use uslm::{parse_document, CrossRef, DocNode, DocumentGraph, NodeId, NodeKind, Relation};
