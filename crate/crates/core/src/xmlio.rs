//! HepRep XML persistency (`heprep-kit/1`), with transparent gzip.
//!
//! Grammar:
//!
//! ```text
//! heprep(version?)      > layer(name)*, typetree*, instancetree*
//! typetree(name,version) > type                 (exactly one root type)
//! type(name)            > attdef*, attvalue*, type*
//! attdef(name,desc,category,extra)
//! attvalue(name,type?,value)   type: string|int|double|boolean|color
//! instancetree(name,version,typetreename) > instance   (exactly one root)
//! instance(type)        > attvalue*, point*, instance*
//! point(x,y,z)
//! ```
//!
//! Colors are written `r,g,b,a`; `r,g,b` is accepted on input with alpha 1.
//! Reals use the shortest decimal that parses back to the same `f64`.
//! Unknown elements and attributes are schema errors.

use std::borrow::Cow;
use std::fmt::Write as _;
use std::io::{Read, Write};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

use crate::model::{
    AttDef, AttValue, Color, Document, InstanceNode, InstanceTree, Point3, TypeNode, TypeTree,
    Value, Violation,
};

pub const FORMAT_VERSION: &str = "heprep-kit/1";
pub const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Nesting deeper than this is rejected rather than recursed into.
pub const MAX_DEPTH: usize = 512;
/// Decompressed inputs larger than this are rejected.
pub const MAX_DECOMPRESSED: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum XmlError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Compression(String),
    #[error("<{element}>: {message}")]
    Schema { element: String, message: String },
    #[error("document is invalid: {}", list_violations(.0))]
    Invalid(Vec<Violation>),
}

impl XmlError {
    /// Short machine-readable kind.
    pub fn code(&self) -> &'static str {
        match self {
            XmlError::Parse { .. } => "parse",
            XmlError::Compression(_) => "compression",
            XmlError::Schema { .. } => "schema",
            XmlError::Invalid(_) => "invalid",
        }
    }
}

fn list_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// Counts gathered by [`stats`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FileStats {
    pub byte_size: usize,
    pub compressed: bool,
    pub type_count: usize,
    pub instance_count: usize,
    pub point_count: usize,
}

pub fn is_gzip(bytes: &[u8]) -> bool {
    bytes.starts_with(&GZIP_MAGIC)
}

fn decompress(bytes: &[u8]) -> Result<Vec<u8>, XmlError> {
    let mut out = Vec::new();
    GzDecoder::new(bytes)
        .take(MAX_DECOMPRESSED + 1)
        .read_to_end(&mut out)
        .map_err(|e| XmlError::Compression(format!("gzip: {e}")))?;
    if out.len() as u64 > MAX_DECOMPRESSED {
        return Err(XmlError::Compression(
            "decompressed size exceeds limit".into(),
        ));
    }
    Ok(out)
}

pub fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

/// Parses (and if needed decompresses) a HepRep file.
pub fn parse(bytes: &[u8]) -> Result<Document, XmlError> {
    let owned;
    let xml = if is_gzip(bytes) {
        owned = decompress(bytes)?;
        &owned[..]
    } else {
        bytes
    };
    let text = std::str::from_utf8(xml).map_err(|e| {
        let (line, column) = line_col(xml, e.valid_up_to());
        XmlError::Parse {
            line,
            column,
            message: "invalid UTF-8".into(),
        }
    })?;
    Parser::new(text).run()
}

/// Parses and reports counts without keeping the document.
pub fn stats(bytes: &[u8]) -> Result<FileStats, XmlError> {
    let doc = parse(bytes)?;
    Ok(FileStats {
        byte_size: bytes.len(),
        compressed: is_gzip(bytes),
        type_count: doc.type_count(),
        instance_count: doc.instance_count(),
        point_count: doc.point_count(),
    })
}

fn line_col(bytes: &[u8], offset: usize) -> (usize, usize) {
    let offset = offset.min(bytes.len());
    let before = &bytes[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let line_start = before
        .iter()
        .rposition(|&b| b == b'\n')
        .map_or(0, |p| p + 1);
    let column = String::from_utf8_lossy(&before[line_start..]).chars().count() + 1;
    (line, column)
}

enum Frame {
    Root(Document),
    TypeTree {
        name: String,
        version: String,
        root: Option<TypeNode>,
    },
    Type(TypeNode),
    InstanceTree {
        name: String,
        version: String,
        type_tree: String,
        root: Option<InstanceNode>,
    },
    Instance(InstanceNode),
    /// attdef / attvalue / point / layer: already attached, must stay empty.
    Leaf(&'static str),
}

impl Frame {
    fn element(&self) -> &'static str {
        match self {
            Frame::Root(_) => "heprep",
            Frame::TypeTree { .. } => "typetree",
            Frame::Type(_) => "type",
            Frame::InstanceTree { .. } => "instancetree",
            Frame::Instance(_) => "instance",
            Frame::Leaf(e) => e,
        }
    }
}

struct Parser<'a> {
    text: &'a str,
    reader: Reader<&'a [u8]>,
    stack: Vec<Frame>,
    done: Option<Document>,
}

fn schema(element: &str, message: impl Into<String>) -> XmlError {
    XmlError::Schema {
        element: element.to_owned(),
        message: message.into(),
    }
}

/// Attributes of one start tag, checked against an allowed set.
struct Attrs<'e> {
    element: &'e str,
    values: Vec<(&'static str, String)>,
}

impl Attrs<'_> {
    fn take(&mut self, key: &str) -> Option<String> {
        let idx = self.values.iter().position(|(k, _)| *k == key)?;
        Some(self.values.swap_remove(idx).1)
    }

    fn required(&mut self, key: &str) -> Result<String, XmlError> {
        self.take(key)
            .ok_or_else(|| schema(self.element, format!("missing attribute `{key}`")))
    }

    fn optional(&mut self, key: &str) -> String {
        self.take(key).unwrap_or_default()
    }
}

fn parse_real(element: &str, key: &str, s: &str) -> Result<f64, XmlError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| schema(element, format!("`{key}` is not a number: {s:?}")))
}

fn parse_value(kind: &str, text: &str) -> Result<Value, XmlError> {
    let bad = |what: &str| schema("attvalue", format!("invalid {what} value {text:?}"));
    Ok(match kind {
        "string" => Value::String(text.to_owned()),
        "int" => Value::Int(text.trim().parse().map_err(|_| bad("int"))?),
        "double" => Value::Real(text.trim().parse().map_err(|_| bad("double"))?),
        "boolean" => match text.trim() {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            _ => return Err(bad("boolean")),
        },
        "color" => {
            let parts = text
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad("color"))?;
            match parts[..] {
                [r, g, b] => Value::Color(Color::rgb(r, g, b)),
                [r, g, b, a] => Value::Color(Color::rgba(r, g, b, a)),
                _ => return Err(bad("color")),
            }
        }
        other => {
            return Err(schema(
                "attvalue",
                format!("unknown value type `{other}`"),
            ))
        }
    })
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let mut reader = Reader::from_str(text);
        reader.config_mut().check_end_names = true;
        Parser {
            text,
            reader,
            stack: Vec::new(),
            done: None,
        }
    }

    fn parse_error(&self, offset: u64, message: impl Into<String>) -> XmlError {
        let (line, column) = line_col(self.text.as_bytes(), offset as usize);
        XmlError::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn run(mut self) -> Result<Document, XmlError> {
        loop {
            let pos = self.reader.buffer_position();
            let event = match self.reader.read_event() {
                Ok(ev) => ev,
                Err(e) => {
                    let at = self.reader.error_position();
                    return Err(self.parse_error(at, e.to_string()));
                }
            };
            match event {
                Event::Start(e) => {
                    let e = e.into_owned();
                    self.open(&e, pos)?;
                }
                Event::Empty(e) => {
                    let e = e.into_owned();
                    self.open(&e, pos)?;
                    self.close()?;
                }
                Event::End(_) => self.close()?,
                Event::Text(t) => {
                    let raw = t.into_inner();
                    if !raw.iter().all(u8::is_ascii_whitespace) {
                        let element = self.stack.last().map_or("heprep", Frame::element);
                        return Err(schema(element, "unexpected text content"));
                    }
                }
                Event::CData(_) => {
                    let element = self.stack.last().map_or("heprep", Frame::element);
                    return Err(schema(element, "unexpected CDATA"));
                }
                Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
                Event::Eof => break,
            }
        }
        if let Some(open) = self.stack.last() {
            let at = self.text.len() as u64;
            return Err(self.parse_error(
                at,
                format!("unexpected end of input inside <{}>", open.element()),
            ));
        }
        let doc = self
            .done
            .ok_or_else(|| self_parse_error(self.text, "no <heprep> element"))?;
        if let Some(v) = doc.validate().into_iter().next() {
            return Err(schema(&v.path, v.code.as_str()));
        }
        Ok(doc)
    }

    fn attrs<'e>(
        &self,
        e: &BytesStart<'_>,
        element: &'e str,
        allowed: &[&'static str],
        pos: u64,
    ) -> Result<Attrs<'e>, XmlError> {
        let mut values = Vec::new();
        for attr in e.attributes() {
            let attr = attr.map_err(|err| self.parse_error(pos, err.to_string()))?;
            let key = attr.key.as_ref();
            let Some(&name) = allowed.iter().find(|k| k.as_bytes() == key) else {
                return Err(schema(
                    element,
                    format!("unknown attribute `{}`", String::from_utf8_lossy(key)),
                ));
            };
            let value = attr
                .unescape_value()
                .map_err(|err| self.parse_error(pos, err.to_string()))?;
            values.push((name, Cow::into_owned(value)));
        }
        Ok(Attrs { element, values })
    }

    fn open(&mut self, e: &BytesStart<'_>, pos: u64) -> Result<(), XmlError> {
        let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
        if self.stack.len() >= MAX_DEPTH {
            return Err(schema(&name, "nesting too deep"));
        }
        let parent = self.stack.last().map(Frame::element);
        let frame = match (parent, name.as_str()) {
            (None, "heprep") => {
                if self.done.is_some() {
                    return Err(schema("heprep", "more than one root element"));
                }
                let mut a = self.attrs(e, "heprep", &["version"], pos)?;
                if let Some(v) = a.take("version") {
                    if v != FORMAT_VERSION {
                        return Err(schema("heprep", format!("unsupported version {v:?}")));
                    }
                }
                Frame::Root(Document::default())
            }
            (Some("heprep"), "layer") => {
                let mut a = self.attrs(e, "layer", &["name"], pos)?;
                let layer = a.required("name")?;
                match self.stack.last_mut() {
                    Some(Frame::Root(doc)) => doc.layer_order.push(layer),
                    _ => unreachable!("parent checked above"),
                }
                Frame::Leaf("layer")
            }
            (Some("heprep"), "typetree") => {
                let mut a = self.attrs(e, "typetree", &["name", "version"], pos)?;
                Frame::TypeTree {
                    name: a.required("name")?,
                    version: a.optional("version"),
                    root: None,
                }
            }
            (Some("heprep"), "instancetree") => {
                let mut a = self.attrs(
                    e,
                    "instancetree",
                    &["name", "version", "typetreename"],
                    pos,
                )?;
                Frame::InstanceTree {
                    name: a.required("name")?,
                    version: a.optional("version"),
                    type_tree: a.required("typetreename")?,
                    root: None,
                }
            }
            (Some("typetree" | "type"), "type") => {
                let mut a = self.attrs(e, "type", &["name"], pos)?;
                Frame::Type(TypeNode::new(&a.required("name")?))
            }
            (Some("type"), "attdef") => {
                let mut a = self.attrs(
                    e,
                    "attdef",
                    &["name", "desc", "category", "extra"],
                    pos,
                )?;
                let def = AttDef::new(
                    &a.required("name")?,
                    &a.optional("desc"),
                    &a.optional("category"),
                    &a.optional("extra"),
                );
                match self.stack.last_mut() {
                    Some(Frame::Type(t)) => t.att_defs.push(def),
                    _ => unreachable!("parent checked above"),
                }
                Frame::Leaf("attdef")
            }
            (Some("type" | "instance"), "attvalue") => {
                let mut a = self.attrs(e, "attvalue", &["name", "type", "value"], pos)?;
                let att_name = a.required("name")?;
                let kind = a.take("type").unwrap_or_else(|| "string".into());
                let value = parse_value(&kind, &a.required("value")?)?;
                let att = AttValue::new(&att_name, value);
                match self.stack.last_mut() {
                    Some(Frame::Type(t)) => t.att_values.push(att),
                    Some(Frame::Instance(i)) => i.att_values.push(att),
                    _ => unreachable!("parent checked above"),
                }
                Frame::Leaf("attvalue")
            }
            (Some("instancetree" | "instance"), "instance") => {
                let mut a = self.attrs(e, "instance", &["type"], pos)?;
                Frame::Instance(InstanceNode::new(&a.required("type")?))
            }
            (Some("instance"), "point") => {
                let mut a = self.attrs(e, "point", &["x", "y", "z"], pos)?;
                let p = Point3::new(
                    parse_real("point", "x", &a.required("x")?)?,
                    parse_real("point", "y", &a.required("y")?)?,
                    parse_real("point", "z", &a.required("z")?)?,
                );
                match self.stack.last_mut() {
                    Some(Frame::Instance(i)) => i.points.push(p),
                    _ => unreachable!("parent checked above"),
                }
                Frame::Leaf("point")
            }
            (Some(p), _) => {
                return Err(schema(&name, format!("not allowed inside <{p}>")));
            }
            (None, _) => return Err(schema(&name, "expected <heprep> as root element")),
        };
        self.stack.push(frame);
        Ok(())
    }

    fn close(&mut self) -> Result<(), XmlError> {
        let frame = self.stack.pop().expect("reader checks end tags");
        match frame {
            Frame::Root(doc) => self.done = Some(doc),
            Frame::Leaf(_) => {}
            Frame::TypeTree {
                name,
                version,
                root,
            } => {
                let root = root.ok_or_else(|| schema("typetree", "missing root <type>"))?;
                match self.stack.last_mut() {
                    Some(Frame::Root(doc)) => doc.type_trees.push(TypeTree {
                        name,
                        version,
                        root,
                    }),
                    _ => unreachable!(),
                }
            }
            Frame::InstanceTree {
                name,
                version,
                type_tree,
                root,
            } => {
                let root =
                    root.ok_or_else(|| schema("instancetree", "missing root <instance>"))?;
                match self.stack.last_mut() {
                    Some(Frame::Root(doc)) => doc.instance_trees.push(InstanceTree {
                        name,
                        version,
                        type_tree,
                        root,
                    }),
                    _ => unreachable!(),
                }
            }
            Frame::Type(node) => match self.stack.last_mut() {
                Some(Frame::TypeTree { root, .. }) => {
                    if root.is_some() {
                        return Err(schema("typetree", "more than one root <type>"));
                    }
                    *root = Some(node);
                }
                Some(Frame::Type(parent)) => parent.children.push(node),
                _ => unreachable!(),
            },
            Frame::Instance(node) => match self.stack.last_mut() {
                Some(Frame::InstanceTree { root, .. }) => {
                    if root.is_some() {
                        return Err(schema("instancetree", "more than one root <instance>"));
                    }
                    *root = Some(node);
                }
                Some(Frame::Instance(parent)) => parent.children.push(node),
                _ => unreachable!(),
            },
        }
        Ok(())
    }
}

fn self_parse_error(text: &str, message: &str) -> XmlError {
    let (line, column) = line_col(text.as_bytes(), text.len());
    XmlError::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Shortest decimal text that parses back to exactly `v`.
pub fn format_real(v: f64) -> String {
    format!("{v:?}")
}

fn escape_into(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\t' | '\n' | '\r' => {
                let _ = write!(out, "&#{};", c as u32);
            }
            c => out.push(c),
        }
    }
}

fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r' | '\u{20}'..='\u{D7FF}' | '\u{E000}'..='\u{FFFD}' | '\u{10000}'..)
}

struct Writer {
    out: String,
}

impl Writer {
    fn indent(&mut self, depth: usize) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
    }

    fn open(&mut self, depth: usize, element: &str, attrs: &[(&str, &str)], empty: bool) {
        self.indent(depth);
        self.out.push('<');
        self.out.push_str(element);
        for (k, v) in attrs {
            self.out.push(' ');
            self.out.push_str(k);
            self.out.push_str("=\"");
            escape_into(&mut self.out, v);
            self.out.push('"');
        }
        self.out.push_str(if empty { "/>\n" } else { ">\n" });
    }

    fn close(&mut self, depth: usize, element: &str) {
        self.indent(depth);
        self.out.push_str("</");
        self.out.push_str(element);
        self.out.push_str(">\n");
    }

    fn att_value(&mut self, depth: usize, v: &AttValue) {
        let (kind, text) = match &v.value {
            Value::String(s) => ("string", s.clone()),
            Value::Int(i) => ("int", i.to_string()),
            Value::Real(r) => ("double", format_real(*r)),
            Value::Bool(b) => ("boolean", b.to_string()),
            Value::Color(c) => (
                "color",
                c.components()
                    .map(format_real)
                    .join(","),
            ),
        };
        self.open(
            depth,
            "attvalue",
            &[("name", &v.name), ("type", kind), ("value", &text)],
            true,
        );
    }

    fn type_node(&mut self, depth: usize, t: &TypeNode) {
        let empty = t.att_defs.is_empty() && t.att_values.is_empty() && t.children.is_empty();
        self.open(depth, "type", &[("name", &t.name)], empty);
        if empty {
            return;
        }
        for d in &t.att_defs {
            self.open(
                depth + 1,
                "attdef",
                &[
                    ("name", &d.name),
                    ("desc", &d.description),
                    ("category", &d.category),
                    ("extra", &d.extra),
                ],
                true,
            );
        }
        for v in &t.att_values {
            self.att_value(depth + 1, v);
        }
        for c in &t.children {
            self.type_node(depth + 1, c);
        }
        self.close(depth, "type");
    }

    fn instance(&mut self, depth: usize, n: &InstanceNode) {
        let empty = n.att_values.is_empty() && n.points.is_empty() && n.children.is_empty();
        self.open(depth, "instance", &[("type", &n.type_path)], empty);
        if empty {
            return;
        }
        for v in &n.att_values {
            self.att_value(depth + 1, v);
        }
        for p in &n.points {
            self.open(
                depth + 1,
                "point",
                &[
                    ("x", &format_real(p.x)),
                    ("y", &format_real(p.y)),
                    ("z", &format_real(p.z)),
                ],
                true,
            );
        }
        for c in &n.children {
            self.instance(depth + 1, c);
        }
        self.close(depth, "instance");
    }
}

fn unrepresentable_text(doc: &Document) -> Option<String> {
    fn check(s: &str, out: &mut Option<String>) {
        if out.is_none() && !s.chars().all(is_xml_char) {
            *out = Some(s.to_owned());
        }
    }
    fn values(vs: &[AttValue], out: &mut Option<String>) {
        for v in vs {
            check(&v.name, out);
            if let Value::String(s) = &v.value {
                check(s, out);
            }
        }
    }
    fn types(t: &TypeNode, out: &mut Option<String>) {
        check(&t.name, out);
        for d in &t.att_defs {
            for s in [&d.name, &d.description, &d.category, &d.extra] {
                check(s, out);
            }
        }
        values(&t.att_values, out);
        t.children.iter().for_each(|c| types(c, out));
    }
    fn instances(n: &InstanceNode, out: &mut Option<String>) {
        check(&n.type_path, out);
        values(&n.att_values, out);
        n.children.iter().for_each(|c| instances(c, out));
    }
    let mut out = None;
    doc.layer_order.iter().for_each(|l| check(l, &mut out));
    for t in &doc.type_trees {
        check(&t.name, &mut out);
        check(&t.version, &mut out);
        types(&t.root, &mut out);
    }
    for t in &doc.instance_trees {
        check(&t.name, &mut out);
        check(&t.version, &mut out);
        check(&t.type_tree, &mut out);
        instances(&t.root, &mut out);
    }
    out
}

/// Canonical serialization. Equal documents always give identical bytes.
pub fn serialize(doc: &Document, compress: bool) -> Result<Vec<u8>, XmlError> {
    let violations = doc.validate();
    if !violations.is_empty() {
        return Err(XmlError::Invalid(violations));
    }
    if let Some(text) = unrepresentable_text(doc) {
        return Err(schema(
            "heprep",
            format!("text {text:?} contains characters XML cannot carry"),
        ));
    }
    let mut w = Writer {
        out: String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"),
    };
    w.open(0, "heprep", &[("version", FORMAT_VERSION)], false);
    for layer in &doc.layer_order {
        w.open(1, "layer", &[("name", layer)], true);
    }
    for t in &doc.type_trees {
        w.open(1, "typetree", &[("name", &t.name), ("version", &t.version)], false);
        w.type_node(2, &t.root);
        w.close(1, "typetree");
    }
    for t in &doc.instance_trees {
        w.open(
            1,
            "instancetree",
            &[
                ("name", &t.name),
                ("version", &t.version),
                ("typetreename", &t.type_tree),
            ],
            false,
        );
        w.instance(2, &t.root);
        w.close(1, "instancetree");
    }
    w.close(0, "heprep");
    let bytes = w.out.into_bytes();
    Ok(if compress { gzip(&bytes) } else { bytes })
}
