//! Merging of definitional paragraphs into definition units.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{DetectionResult, ParagraphRecord};
use crate::text::{join_nonempty, tokens};
use crate::uslm::{CrossRef, DocumentGraph, NodeId, NodeKind, UslmError};

pub const DEFAULT_SIM_THRESHOLD: f64 = 0.3;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("{paragraphs} paragraphs but {detections} detection results")]
    Alignment { paragraphs: usize, detections: usize },
    #[error("detection {index} is for {found} but paragraph is {expected}")]
    Misaligned {
        index: usize,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Uslm(#[from] UslmError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateOptions {
    pub sim_threshold: f64,
    /// Close the open unit whenever a non-definitional paragraph intervenes.
    pub strict_flush: bool,
}

impl Default for AggregateOptions {
    fn default() -> Self {
        AggregateOptions {
            sim_threshold: DEFAULT_SIM_THRESHOLD,
            strict_flush: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefinitionUnit {
    /// Identifier of the anchor paragraph.
    pub unit_id: String,
    pub member_ids: Vec<NodeId>,
    pub member_identifiers: Vec<String>,
    pub anchor_id: NodeId,
    pub combined_text: String,
    /// Cross-references inside any member's subtree, document order, deduplicated.
    pub refs: Vec<CrossRef>,
    /// Highest detection score among the members.
    pub score: f64,
}

impl DefinitionUnit {
    /// Build a unit from paragraphs given in document order. A member nested
    /// under another member adds no text of its own, since the ancestor's
    /// recursive text already contains it.
    pub fn from_members(
        members: &[&ParagraphRecord],
        scores: &[f64],
        graph: &DocumentGraph,
    ) -> Result<DefinitionUnit, UslmError> {
        assert!(!members.is_empty(), "a unit needs at least one member");
        let ids: HashSet<NodeId> = members.iter().map(|p| p.node_id).collect();
        let mut texts = Vec::new();
        let mut refs = Vec::new();
        let mut seen_refs = HashSet::new();
        for p in members {
            graph.node(p.node_id)?;
            if graph.ancestors(p.node_id).any(|a| ids.contains(&a)) {
                continue;
            }
            texts.push(p.text.as_str());
            for n in graph.subtree(p.node_id) {
                for r in &graph.nodes()[n.index()].refs {
                    if seen_refs.insert(r.clone()) {
                        refs.push(r.clone());
                    }
                }
            }
        }
        Ok(DefinitionUnit {
            unit_id: members[0].identifier.clone(),
            member_ids: members.iter().map(|p| p.node_id).collect(),
            member_identifiers: members.iter().map(|p| p.identifier.clone()).collect(),
            anchor_id: members[0].node_id,
            combined_text: join_nonempty(texts),
            refs,
            score: scores.iter().copied().fold(0.0, f64::max),
        })
    }
}

/// Cosine similarity of lowercased alphanumeric term-frequency vectors.
pub fn tf_cosine(a: &str, b: &str) -> f64 {
    let tf = |s: &str| {
        let mut m: HashMap<String, f64> = HashMap::new();
        for t in tokens(s) {
            *m.entry(t).or_default() += 1.0;
        }
        m
    };
    let (va, vb) = (tf(a), tf(b));
    if va.is_empty() || vb.is_empty() {
        return 0.0;
    }
    let dot: f64 = va
        .iter()
        .filter_map(|(k, x)| vb.get(k).map(|y| x * y))
        .sum();
    let norm = |v: &HashMap<String, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (norm(&va) * norm(&vb))).min(1.0)
}

/// A paragraph belongs with a unit when it is structurally tied to any member
/// (containment at any depth, or a shared parent) or lexically similar to the
/// unit's text.
pub fn is_related(
    p: &ParagraphRecord,
    unit: &DefinitionUnit,
    graph: &DocumentGraph,
    sim_threshold: f64,
) -> Result<bool, UslmError> {
    for &m in &unit.member_ids {
        if graph.structural_relation(p.node_id, m)?.is_structural() {
            return Ok(true);
        }
    }
    Ok(tf_cosine(&p.text, &unit.combined_text) >= sim_threshold)
}

/// The aggregation state machine over paragraph indices.
///
/// Non-definitional paragraphs are skipped; a definitional paragraph joins the
/// open unit if it is empty or `related` says so, otherwise the open unit is
/// closed and a new one started. With `strict_flush`, a non-definitional
/// paragraph also closes the open unit.
pub fn partition<E>(
    definitional: &[bool],
    strict_flush: bool,
    mut related: impl FnMut(usize, &[usize]) -> Result<bool, E>,
) -> Result<Vec<Vec<usize>>, E> {
    let mut definitions = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for (i, &is_def) in definitional.iter().enumerate() {
        if !is_def {
            if strict_flush && !current.is_empty() {
                definitions.push(std::mem::take(&mut current));
            }
            continue;
        }
        if current.is_empty() || related(i, &current)? {
            current.push(i);
        } else {
            definitions.push(std::mem::replace(&mut current, vec![i]));
        }
    }
    if !current.is_empty() {
        definitions.push(current);
    }
    Ok(definitions)
}

/// Group definitional paragraphs into units. Units never cross a section
/// boundary.
pub fn aggregate(
    paragraphs: &[ParagraphRecord],
    detections: &[DetectionResult],
    graph: &DocumentGraph,
    opts: AggregateOptions,
) -> Result<Vec<DefinitionUnit>, AggregateError> {
    if paragraphs.len() != detections.len() {
        return Err(AggregateError::Alignment {
            paragraphs: paragraphs.len(),
            detections: detections.len(),
        });
    }
    for (i, (p, d)) in paragraphs.iter().zip(detections).enumerate() {
        if p.node_id != d.node_id {
            return Err(AggregateError::Misaligned {
                index: i,
                expected: p.identifier.clone(),
                found: d.identifier.clone(),
            });
        }
    }
    let definitional: Vec<bool> = detections.iter().map(|d| d.is_definitional).collect();
    let scores: Vec<f64> = detections.iter().map(|d| d.score).collect();
    let build = |idx: &[usize]| {
        let members: Vec<&ParagraphRecord> = idx.iter().map(|&i| &paragraphs[i]).collect();
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        DefinitionUnit::from_members(&members, &s, graph)
    };
    let groups = partition(&definitional, opts.strict_flush, |i, current| {
        let p = &paragraphs[i];
        let anchor = paragraphs[current[0]].node_id;
        if graph.enclosing(p.node_id, NodeKind::Section) != graph.enclosing(anchor, NodeKind::Section)
        {
            return Ok(false);
        }
        let unit = build(current)?;
        is_related(p, &unit, graph, opts.sim_threshold)
    })
    .map_err(AggregateError::Uslm)?;
    groups
        .iter()
        .map(|g| build(g).map_err(AggregateError::from))
        .collect()
}
