//! USLM document graph.
//!
//! The parser keeps the statutory hierarchy (title, chapter, section, subsection,
//! paragraph, subparagraph, clause, subclause) as a tree of [`DocNode`]s. Each node
//! owns its heading, chapeau and content text plus the `<ref>` cross-references
//! that appear inside them. All stored text is whitespace-collapsed and uses
//! straight quotes.

mod parse;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::join_nonempty;

pub use parse::{parse_document, parse_reader, SectionStream};

#[derive(Debug, Error)]
pub enum UslmError {
    #[error("malformed XML at byte {position}: {message}")]
    MalformedXml { position: u64, message: String },
    #[error("document contains no structural elements")]
    EmptyDocument,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Index of a node inside one [`DocumentGraph`]. Only meaningful for the graph
/// that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Title,
    Chapter,
    Section,
    Subsection,
    Paragraph,
    Subparagraph,
    Clause,
    Subclause,
    Other,
}

impl NodeKind {
    pub fn from_element(local_name: &str) -> Option<NodeKind> {
        Some(match local_name {
            "title" => NodeKind::Title,
            "chapter" => NodeKind::Chapter,
            "section" => NodeKind::Section,
            "subsection" => NodeKind::Subsection,
            "paragraph" => NodeKind::Paragraph,
            "subparagraph" => NodeKind::Subparagraph,
            "clause" => NodeKind::Clause,
            "subclause" => NodeKind::Subclause,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Title => "title",
            NodeKind::Chapter => "chapter",
            NodeKind::Section => "section",
            NodeKind::Subsection => "subsection",
            NodeKind::Paragraph => "paragraph",
            NodeKind::Subparagraph => "subparagraph",
            NodeKind::Clause => "clause",
            NodeKind::Subclause => "subclause",
            NodeKind::Other => "other",
        }
    }

    /// Subdivisions of a section: the levels at which definitions are written.
    pub fn is_subdivision(self) -> bool {
        matches!(
            self,
            NodeKind::Subsection
                | NodeKind::Paragraph
                | NodeKind::Subparagraph
                | NodeKind::Clause
                | NodeKind::Subclause
        )
    }
}

/// Organizational levels between title and section. USLM does not nest section
/// identifiers under them (`/us/usc/t7/ch64` contains `/us/usc/t7/s3103`).
const ORGANIZATIONAL_ELEMENTS: &[&str] = &[
    "chapter",
    "subtitle",
    "subchapter",
    "part",
    "subpart",
    "division",
    "subdivision",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CrossRef {
    pub href: String,
    pub anchor_text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocNode {
    pub id: NodeId,
    pub identifier: String,
    /// True when the source element had no `identifier` attribute and one was
    /// derived from the parent.
    pub synthesized: bool,
    pub kind: NodeKind,
    /// Local element name as it appeared in the XML.
    pub element: String,
    pub num: Option<String>,
    pub heading: Option<String>,
    pub chapeau: Option<String>,
    pub content: Option<String>,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub refs: Vec<CrossRef>,
}

impl DocNode {
    pub fn is_organizational(&self) -> bool {
        ORGANIZATIONAL_ELEMENTS.contains(&self.element.as_str())
    }

    /// Heading, chapeau and content joined by single spaces.
    pub fn own_text(&self) -> String {
        join_nonempty([
            self.heading.as_deref().unwrap_or(""),
            self.chapeau.as_deref().unwrap_or(""),
            self.content.as_deref().unwrap_or(""),
        ])
    }

    /// Chapeau and content only; the lead text that scoping language lives in.
    pub fn lead_text(&self) -> String {
        join_nonempty([
            self.chapeau.as_deref().unwrap_or(""),
            self.content.as_deref().unwrap_or(""),
        ])
    }

    pub fn has_body_text(&self) -> bool {
        self.chapeau.is_some() || self.content.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Same,
    /// `a` is the parent of `b`.
    Parent,
    /// `a` is a child of `b`.
    Child,
    Sibling,
    /// `a` is a strict ancestor of `b` at distance two or more.
    Ancestor,
    /// `a` is a strict descendant of `b` at distance two or more.
    Descendant,
    Unrelated,
}

impl Relation {
    /// Any containment or shared-parent relation.
    pub fn is_structural(self) -> bool {
        matches!(
            self,
            Relation::Parent
                | Relation::Child
                | Relation::Sibling
                | Relation::Ancestor
                | Relation::Descendant
        )
    }
}

/// Tree of [`DocNode`]s. Nodes are stored in document (pre-)order, so iterating
/// `nodes()` visits them in the order their start tags appear.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentGraph {
    pub(crate) root: NodeId,
    pub(crate) nodes: Vec<DocNode>,
    pub(crate) by_identifier: HashMap<String, NodeId>,
}

impl DocumentGraph {
    pub(crate) fn from_nodes(nodes: Vec<DocNode>) -> DocumentGraph {
        let mut by_identifier = HashMap::with_capacity(nodes.len());
        for n in &nodes {
            by_identifier.entry(n.identifier.clone()).or_insert(n.id);
        }
        DocumentGraph {
            root: NodeId(0),
            nodes,
            by_identifier,
        }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[DocNode] {
        &self.nodes
    }

    pub fn get(&self, id: NodeId) -> Option<&DocNode> {
        self.nodes.get(id.0)
    }

    pub fn node(&self, id: NodeId) -> Result<&DocNode, UslmError> {
        self.get(id).ok_or(UslmError::UnknownNode(id))
    }

    pub fn lookup(&self, identifier: &str) -> Option<NodeId> {
        self.by_identifier.get(identifier).copied()
    }

    pub fn by_identifier(&self, identifier: &str) -> Option<&DocNode> {
        self.lookup(identifier).and_then(|id| self.get(id))
    }

    /// Strict ancestors of `id`, nearest first.
    pub fn ancestors(&self, id: NodeId) -> Ancestors<'_> {
        Ancestors {
            graph: self,
            next: self.get(id).and_then(|n| n.parent),
        }
    }

    pub fn depth(&self, id: NodeId) -> usize {
        self.ancestors(id).count()
    }

    /// Nearest node of `kind` among `id` and its ancestors.
    pub fn enclosing(&self, id: NodeId, kind: NodeKind) -> Option<NodeId> {
        let node = self.get(id)?;
        if node.kind == kind {
            return Some(id);
        }
        self.ancestors(id).find(|a| self.nodes[a.0].kind == kind)
    }

    /// `id` followed by all its descendants in document order.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n.0].children.iter().rev().copied());
        }
        out
    }

    /// Heading, chapeau and content of the node and, when `recursive`, of every
    /// descendant in document order, joined by single spaces.
    pub fn node_text(&self, id: NodeId, recursive: bool) -> Result<String, UslmError> {
        let node = self.node(id)?;
        if !recursive {
            return Ok(node.own_text());
        }
        let parts: Vec<String> = self
            .subtree(id)
            .into_iter()
            .map(|n| self.nodes[n.0].own_text())
            .collect();
        Ok(join_nonempty(parts.iter().map(String::as_str)))
    }

    /// The role `a` plays relative to `b` in the tree.
    pub fn structural_relation(&self, a: NodeId, b: NodeId) -> Result<Relation, UslmError> {
        self.node(a)?;
        self.node(b)?;
        if a == b {
            return Ok(Relation::Same);
        }
        let pa = self.nodes[a.0].parent;
        let pb = self.nodes[b.0].parent;
        if pb == Some(a) {
            return Ok(Relation::Parent);
        }
        if pa == Some(b) {
            return Ok(Relation::Child);
        }
        if pa.is_some() && pa == pb {
            return Ok(Relation::Sibling);
        }
        if self.ancestors(b).any(|x| x == a) {
            return Ok(Relation::Ancestor);
        }
        if self.ancestors(a).any(|x| x == b) {
            return Ok(Relation::Descendant);
        }
        Ok(Relation::Unrelated)
    }

    /// Cross-references found in the node's own heading, chapeau and content.
    pub fn extract_refs(&self, id: NodeId) -> Result<Vec<CrossRef>, UslmError> {
        Ok(self.node(id)?.refs.clone())
    }

    /// Nodes whose identifier does not strictly extend the identifier of their
    /// nearest ancestor that is neither organizational nor synthesized.
    pub fn prefix_violations(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| {
                let Some(anchor) = self
                    .ancestors(n.id)
                    .map(|a| &self.nodes[a.0])
                    .find(|a| !a.is_organizational() && !a.synthesized)
                else {
                    return false;
                };
                !(n.identifier.len() > anchor.identifier.len()
                    && n.identifier.starts_with(&anchor.identifier))
            })
            .map(|n| n.id)
            .collect()
    }
}

pub struct Ancestors<'a> {
    graph: &'a DocumentGraph,
    next: Option<NodeId>,
}

impl Iterator for Ancestors<'_> {
    type Item = NodeId;

    fn next(&mut self) -> Option<NodeId> {
        let cur = self.next?;
        self.next = self.graph.nodes[cur.0].parent;
        Some(cur)
    }
}

/// Whether `identifier` equals `prefix` or lies beneath it as a path
/// (`/us/usc/t7/s31` does not contain `/us/usc/t7/s3103`).
pub fn identifier_within(identifier: &str, prefix: &str) -> bool {
    if prefix.is_empty() {
        return true;
    }
    match identifier.strip_prefix(prefix) {
        Some(rest) => rest.is_empty() || rest.starts_with('/') || prefix.ends_with('/'),
        None => false,
    }
}
