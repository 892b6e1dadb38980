use std::collections::VecDeque;
use std::io::BufRead;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use super::{CrossRef, DocNode, DocumentGraph, NodeId, NodeKind, UslmError};
use crate::text::normalize;

/// Elements whose whole subtree is ignored: metadata, editorial notes and
/// source credits are not statutory text.
const SKIPPED: &[&str] = &["meta", "notes", "note", "sourceCredit", "toc"];

/// Document wrappers that never become nodes even when they carry an identifier.
const WRAPPERS: &[&str] = &["uscDoc", "lawDoc", "main", "body"];

/// USLM levels without a dedicated [`NodeKind`].
const OTHER_LEVELS: &[&str] = &[
    "subtitle",
    "subchapter",
    "part",
    "subpart",
    "division",
    "subdivision",
    "item",
    "subitem",
    "subsubitem",
    "level",
];

/// Markup that sits inside running text; no word break is implied around it.
const INLINE: &[&str] = &[
    "inline", "ref", "b", "i", "em", "strong", "sup", "sub", "span", "date", "term", "shortTitle",
    "quotedText",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Num,
    Heading,
    Chapeau,
    Content,
}

#[derive(Debug, Clone, Copy)]
struct Sink {
    node: usize,
    field: Field,
}

#[derive(Debug)]
enum Role {
    Structural,
    Field,
    Ref { href: String, text: String },
    Skip,
    Passthrough,
}

#[derive(Debug)]
struct Open {
    role: Role,
    sink: Option<Sink>,
    block: bool,
}

#[derive(Debug, Default)]
struct Partial {
    kind: Option<NodeKind>,
    element: String,
    identifier: String,
    synthesized: bool,
    num: String,
    heading: String,
    chapeau: String,
    content: String,
    has_num: bool,
    has_heading: bool,
    has_chapeau: bool,
    has_content: bool,
    parent: Option<usize>,
    children: Vec<usize>,
    refs: Vec<CrossRef>,
    child_count: usize,
    had_emitted: bool,
}

impl Partial {
    fn field_mut(&mut self, f: Field) -> &mut String {
        match f {
            Field::Num => &mut self.num,
            Field::Heading => &mut self.heading,
            Field::Chapeau => &mut self.chapeau,
            Field::Content => &mut self.content,
        }
    }

    fn snapshot(&self, id: NodeId, parent: Option<NodeId>) -> DocNode {
        let field = |present: bool, raw: &str| {
            let s = normalize(raw);
            (present && !s.is_empty()).then_some(s)
        };
        DocNode {
            id,
            identifier: self.identifier.clone(),
            synthesized: self.synthesized,
            kind: self.kind.unwrap_or(NodeKind::Other),
            element: self.element.clone(),
            num: field(self.has_num, &self.num),
            heading: field(self.has_heading, &self.heading),
            chapeau: field(self.has_chapeau, &self.chapeau),
            content: field(self.has_content, &self.content),
            parent,
            children: Vec::new(),
            refs: self.refs.clone(),
        }
    }
}

/// Incremental graph builder fed with XML events.
///
/// Structural nodes are allocated in an arena in start-tag order, so the subtree
/// of the most recently closed node always occupies the arena tail. In section
/// mode that tail is cut off and emitted as its own graph as soon as the section
/// closes, which bounds memory by the largest section rather than the document.
struct Builder {
    arena: Vec<Partial>,
    roots: Vec<usize>,
    open: Vec<Open>,
    structural: Vec<usize>,
    top_level: usize,
    skip_depth: usize,
    per_section: bool,
    ready: VecDeque<DocumentGraph>,
    emitted: usize,
}

fn local_name(e: &BytesStart<'_>) -> String {
    String::from_utf8_lossy(e.local_name().as_ref()).into_owned()
}

fn attr(e: &BytesStart<'_>, name: &str) -> Result<Option<String>, quick_xml::Error> {
    for a in e.attributes() {
        let a = a.map_err(quick_xml::Error::from)?;
        if a.key.local_name().as_ref() == name.as_bytes() {
            let v = a.unescape_value()?;
            // identifiers and hrefs never contain whitespace; wrapped attribute
            // values in hand-copied listings do
            return Ok(Some(v.split_whitespace().collect()));
        }
    }
    Ok(None)
}

impl Builder {
    fn new(per_section: bool) -> Builder {
        Builder {
            arena: Vec::new(),
            roots: Vec::new(),
            open: Vec::new(),
            structural: Vec::new(),
            top_level: 0,
            skip_depth: 0,
            per_section,
            ready: VecDeque::new(),
            emitted: 0,
        }
    }

    fn current_sink(&self) -> Option<Sink> {
        self.open.last().and_then(|o| o.sink)
    }

    fn push_text(&mut self, text: &str) {
        if self.skip_depth > 0 || text.is_empty() {
            return;
        }
        for o in self.open.iter_mut() {
            if let Role::Ref { text: t, .. } = &mut o.role {
                t.push_str(text);
            }
        }
        if let Some(sink) = self.current_sink() {
            self.arena[sink.node].field_mut(sink.field).push_str(text);
        }
    }

    fn break_word(&mut self) {
        if let Some(sink) = self.current_sink() {
            let f = self.arena[sink.node].field_mut(sink.field);
            if !f.is_empty() {
                f.push(' ');
            }
        }
    }

    fn start(&mut self, e: &BytesStart<'_>) -> Result<(), quick_xml::Error> {
        let name = local_name(e);
        if self.skip_depth > 0 || SKIPPED.contains(&name.as_str()) {
            self.skip_depth += 1;
            self.open.push(Open {
                role: Role::Skip,
                sink: None,
                block: false,
            });
            return Ok(());
        }
        let parent_sink = self.current_sink();
        let field = match name.as_str() {
            "num" => Some(Field::Num),
            "heading" => Some(Field::Heading),
            "chapeau" => Some(Field::Chapeau),
            "content" | "continuation" => Some(Field::Content),
            _ => None,
        };
        if let Some(f) = field {
            let sink = parent_sink.map(|s| Sink {
                node: s.node,
                field: f,
            });
            if let Some(s) = sink {
                let p = &mut self.arena[s.node];
                match f {
                    Field::Num => p.has_num = true,
                    Field::Heading => p.has_heading = true,
                    Field::Chapeau => p.has_chapeau = true,
                    Field::Content => p.has_content = true,
                }
            }
            self.open.push(Open {
                role: Role::Field,
                sink,
                block: true,
            });
            self.break_word();
            return Ok(());
        }
        if name == "ref" {
            let href = attr(e, "href")?.unwrap_or_default();
            self.open.push(Open {
                role: Role::Ref {
                    href,
                    text: String::new(),
                },
                sink: parent_sink,
                block: false,
            });
            return Ok(());
        }
        let identifier = if WRAPPERS.contains(&name.as_str()) {
            None
        } else {
            attr(e, "identifier")?
        };
        let kind = NodeKind::from_element(&name);
        let structural = !WRAPPERS.contains(&name.as_str())
            && (kind.is_some() || OTHER_LEVELS.contains(&name.as_str()) || identifier.is_some());
        if structural {
            self.open_structural(name, kind.unwrap_or(NodeKind::Other), identifier);
            return Ok(());
        }
        let block = !INLINE.contains(&name.as_str());
        self.open.push(Open {
            role: Role::Passthrough,
            sink: parent_sink,
            block,
        });
        if block {
            self.break_word();
        }
        Ok(())
    }

    fn open_structural(&mut self, element: String, kind: NodeKind, identifier: Option<String>) {
        let parent = self.structural.last().copied();
        let ordinal = match parent {
            Some(p) => {
                self.arena[p].child_count += 1;
                self.arena[p].child_count
            }
            None => {
                self.top_level += 1;
                self.top_level
            }
        };
        let (identifier, synthesized) = match identifier.filter(|s| !s.is_empty()) {
            Some(id) => (id, false),
            None => {
                let base = parent.map(|p| self.arena[p].identifier.as_str()).unwrap_or("");
                (format!("{base}/~{ordinal}"), true)
            }
        };
        let idx = self.arena.len();
        self.arena.push(Partial {
            kind: Some(kind),
            element,
            identifier,
            synthesized,
            parent,
            ..Partial::default()
        });
        match parent {
            Some(p) => self.arena[p].children.push(idx),
            None => self.roots.push(idx),
        }
        self.structural.push(idx);
        self.open.push(Open {
            role: Role::Structural,
            sink: Some(Sink {
                node: idx,
                field: Field::Content,
            }),
            block: true,
        });
    }

    fn end(&mut self) {
        let Some(o) = self.open.pop() else { return };
        match o.role {
            Role::Skip => self.skip_depth -= 1,
            Role::Ref { href, text } => {
                if let Some(sink) = o.sink {
                    if !href.is_empty() {
                        self.arena[sink.node].refs.push(CrossRef {
                            href,
                            anchor_text: normalize(&text),
                        });
                    }
                }
            }
            Role::Structural => {
                let idx = self.structural.pop().expect("structural stack in sync");
                if self.per_section && self.arena[idx].kind == Some(NodeKind::Section) {
                    self.emit_section(idx);
                }
            }
            Role::Field | Role::Passthrough => {
                if o.block {
                    self.break_word();
                }
            }
        }
    }

    fn emit_section(&mut self, idx: usize) {
        let mut nodes = Vec::new();
        let mut parent = None;
        for &anc in &self.structural {
            let id = NodeId(nodes.len());
            nodes.push(self.arena[anc].snapshot(id, parent));
            if let Some(p) = parent {
                nodes[p.0].children.push(id);
            }
            parent = Some(id);
        }
        self.push_subtree(&mut nodes, idx, parent);
        self.ready.push_back(DocumentGraph::from_nodes(nodes));
        self.emitted += 1;

        for &anc in &self.structural {
            self.arena[anc].had_emitted = true;
        }
        match self.arena[idx].parent {
            Some(p) => {
                let popped = self.arena[p].children.pop();
                debug_assert_eq!(popped, Some(idx));
            }
            None => {
                let popped = self.roots.pop();
                debug_assert_eq!(popped, Some(idx));
            }
        }
        self.arena.truncate(idx);
    }

    fn push_subtree(&self, nodes: &mut Vec<DocNode>, idx: usize, parent: Option<NodeId>) {
        let id = NodeId(nodes.len());
        nodes.push(self.arena[idx].snapshot(id, parent));
        if let Some(p) = parent {
            nodes[p.0].children.push(id);
        }
        for &c in &self.arena[idx].children {
            self.push_subtree(nodes, c, Some(id));
        }
    }

    /// Graph of everything still held in the arena, if any of it was not
    /// already emitted as part of a section.
    fn finish(&mut self) -> Result<Option<DocumentGraph>, UslmError> {
        if self.arena.is_empty() {
            return if self.emitted == 0 {
                Err(UslmError::EmptyDocument)
            } else {
                Ok(None)
            };
        }
        if self.emitted > 0 && self.arena.iter().all(|p| p.had_emitted) {
            return Ok(None);
        }
        let mut nodes = Vec::new();
        if self.roots.len() == 1 {
            self.push_subtree(&mut nodes, self.roots[0], None);
        } else {
            let doc = Partial {
                element: "document".into(),
                synthesized: true,
                ..Partial::default()
            };
            nodes.push(doc.snapshot(NodeId(0), None));
            for &r in &self.roots {
                self.push_subtree(&mut nodes, r, Some(NodeId(0)));
            }
        }
        Ok(Some(DocumentGraph::from_nodes(nodes)))
    }
}

/// Pull-based reader that yields one [`DocumentGraph`] per `<section>`, each
/// carrying the chain of its enclosing title/chapter nodes (with whatever lead
/// text they had before the section). Content outside any section is yielded as
/// a final graph. Memory use is bounded by the largest section.
pub struct SectionStream<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    builder: Builder,
    done: bool,
}

impl<R: BufRead> SectionStream<R> {
    pub fn new(reader: R) -> SectionStream<R> {
        SectionStream::with_mode(reader, true)
    }

    fn with_mode(reader: R, per_section: bool) -> SectionStream<R> {
        let mut reader = Reader::from_reader(reader);
        reader.config_mut().check_end_names = true;
        SectionStream {
            reader,
            buf: Vec::with_capacity(8 * 1024),
            builder: Builder::new(per_section),
            done: false,
        }
    }

    fn malformed(&self, message: impl ToString) -> UslmError {
        UslmError::MalformedXml {
            position: self.reader.buffer_position(),
            message: message.to_string(),
        }
    }

    fn step(&mut self) -> Result<bool, UslmError> {
        self.buf.clear();
        let event = match self.reader.read_event_into(&mut self.buf) {
            Ok(ev) => ev,
            Err(quick_xml::Error::Io(e)) => {
                return Err(UslmError::Io(std::io::Error::new(e.kind(), e.to_string())))
            }
            Err(e) => {
                return Err(UslmError::MalformedXml {
                    position: self.reader.error_position(),
                    message: e.to_string(),
                })
            }
        };
        let res = match event {
            Event::Start(e) => self.builder.start(&e),
            Event::Empty(e) => {
                let r = self.builder.start(&e);
                self.builder.end();
                r
            }
            Event::End(_) => {
                self.builder.end();
                Ok(())
            }
            Event::Text(t) => {
                let position = self.reader.buffer_position();
                let s = t
                    .unescape()
                    .map_err(|e| UslmError::MalformedXml {
                        position,
                        message: e.to_string(),
                    })?
                    .into_owned();
                self.builder.push_text(&s);
                Ok(())
            }
            Event::CData(c) => {
                let s = String::from_utf8_lossy(&c.into_inner()).into_owned();
                self.builder.push_text(&s);
                Ok(())
            }
            Event::Eof => {
                if !self.builder.open.is_empty() {
                    return Err(self.malformed("unexpected end of input inside an open element"));
                }
                return Ok(false);
            }
            _ => Ok(()),
        };
        res.map_err(|e| self.malformed(e))?;
        Ok(true)
    }
}

impl<R: BufRead> Iterator for SectionStream<R> {
    type Item = Result<DocumentGraph, UslmError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(g) = self.builder.ready.pop_front() {
                return Some(Ok(g));
            }
            if self.done {
                return None;
            }
            match self.step() {
                Ok(true) => {}
                Ok(false) => {
                    self.done = true;
                    match self.builder.finish() {
                        Ok(Some(g)) => return Some(Ok(g)),
                        Ok(None) => return None,
                        Err(e) => return Some(Err(e)),
                    }
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
    }
}

/// Parse a complete document into a single graph.
pub fn parse_document(xml_text: &str) -> Result<DocumentGraph, UslmError> {
    parse_reader(xml_text.as_bytes())
}

pub fn parse_reader<R: BufRead>(reader: R) -> Result<DocumentGraph, UslmError> {
    let mut stream = SectionStream::with_mode(reader, false);
    match stream.next() {
        Some(r) => r,
        None => Err(UslmError::EmptyDocument),
    }
}
