//! In-memory HepRep hierarchy.
//!
//! A [`Document`] owns two kinds of trees. Type trees carry attribute
//! definitions and default values; instance trees carry geometry points and
//! overriding values. Every instance names its type by a slash-joined path
//! from the root of the type tree its instance tree references.
//!
//! Attribute lookup walks, in order: the instance itself, its ancestor
//! instances from the parent upward, the instance's type, and that type's
//! ancestors from the parent upward. The first node defining the name wins.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// RGBA color, each component in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Color {
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub a: f64,
}

impl Color {
    pub const WHITE: Color = Color::rgba(1.0, 1.0, 1.0, 1.0);
    pub const BLACK: Color = Color::rgba(0.0, 0.0, 0.0, 1.0);

    pub const fn rgba(r: f64, g: f64, b: f64, a: f64) -> Self {
        Color { r, g, b, a }
    }

    pub const fn rgb(r: f64, g: f64, b: f64) -> Self {
        Color { r, g, b, a: 1.0 }
    }

    pub fn components(&self) -> [f64; 4] {
        [self.r, self.g, self.b, self.a]
    }

    pub fn is_valid(&self) -> bool {
        self.components()
            .iter()
            .all(|c| c.is_finite() && (0.0..=1.0).contains(c))
    }

    /// Quantizes to 8 bits per channel (round to nearest).
    pub fn to_rgba8(&self) -> [u8; 4] {
        self.components()
            .map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8)
    }

    pub fn from_rgba8(px: [u8; 4]) -> Self {
        let [r, g, b, a] = px.map(|c| f64::from(c) / 255.0);
        Color { r, g, b, a }
    }
}

/// Typed attribute payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum Value {
    String(String),
    Int(i64),
    Real(f64),
    Bool(bool),
    Color(Color),
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::String(s) => Some(s),
            _ => None,
        }
    }

    /// Numeric view of `Int` and `Real` values.
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Real(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            Value::String(s) if s.eq_ignore_ascii_case("true") => Some(true),
            Value::String(s) if s.eq_ignore_ascii_case("false") => Some(false),
            _ => None,
        }
    }

    pub fn as_color(&self) -> Option<Color> {
        match self {
            Value::Color(c) => Some(*c),
            _ => None,
        }
    }
}

/// One named attribute value. Names are case-insensitive and stored lowercased.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttValue {
    pub name: String,
    pub value: Value,
}

impl AttValue {
    pub fn new(name: &str, value: Value) -> Self {
        AttValue {
            name: name.to_lowercase(),
            value,
        }
    }
}

/// Descriptive attribute schema entry living on a type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttDef {
    pub name: String,
    pub description: String,
    pub category: String,
    /// Units or other free text; may be empty.
    pub extra: String,
}

impl AttDef {
    pub fn new(name: &str, description: &str, category: &str, extra: &str) -> Self {
        AttDef {
            name: name.to_lowercase(),
            description: description.to_owned(),
            category: category.to_owned(),
            extra: extra.to_owned(),
        }
    }
}

/// World coordinates in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TypeNode {
    pub name: String,
    pub att_defs: Vec<AttDef>,
    pub att_values: Vec<AttValue>,
    pub children: Vec<TypeNode>,
}

impl TypeNode {
    pub fn new(name: &str) -> Self {
        TypeNode {
            name: name.to_owned(),
            ..Default::default()
        }
    }

    pub fn with_value(mut self, name: &str, value: Value) -> Self {
        self.att_values.push(AttValue::new(name, value));
        self
    }

    pub fn with_child(mut self, child: TypeNode) -> Self {
        self.children.push(child);
        self
    }

    pub fn att_value(&self, name: &str) -> Option<&AttValue> {
        find_att(&self.att_values, name)
    }

    pub fn child(&self, name: &str) -> Option<&TypeNode> {
        self.children.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InstanceNode {
    /// Slash-joined type path, first segment is the type tree's root type.
    pub type_path: String,
    pub points: Vec<Point3>,
    pub att_values: Vec<AttValue>,
    pub children: Vec<InstanceNode>,
}

impl InstanceNode {
    pub fn new(type_path: &str) -> Self {
        InstanceNode {
            type_path: type_path.to_owned(),
            ..Default::default()
        }
    }

    pub fn with_value(mut self, name: &str, value: Value) -> Self {
        self.att_values.push(AttValue::new(name, value));
        self
    }

    pub fn with_points(mut self, points: impl IntoIterator<Item = Point3>) -> Self {
        self.points.extend(points);
        self
    }

    pub fn with_child(mut self, child: InstanceNode) -> Self {
        self.children.push(child);
        self
    }

    pub fn att_value(&self, name: &str) -> Option<&AttValue> {
        find_att(&self.att_values, name)
    }
}

fn find_att<'a>(values: &'a [AttValue], name: &str) -> Option<&'a AttValue> {
    let key = name.to_lowercase();
    find_key(values, &key)
}

/// Exact match against an already lowercased key.
fn find_key<'a>(values: &'a [AttValue], key: &str) -> Option<&'a AttValue> {
    values.iter().find(|v| v.name == key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeTree {
    pub name: String,
    pub version: String,
    pub root: TypeNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTree {
    pub name: String,
    pub version: String,
    pub type_tree: String,
    pub root: InstanceNode,
}

/// Root container: type trees, instance trees and the back-to-front layer order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Document {
    pub type_trees: Vec<TypeTree>,
    pub instance_trees: Vec<InstanceTree>,
    pub layer_order: Vec<String>,
}

/// Stable handle to an instance: tree name plus child index at each depth.
/// An empty index list designates the tree's root instance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstancePath {
    pub tree: String,
    pub indices: Vec<usize>,
}

impl InstancePath {
    pub fn root(tree: &str) -> Self {
        InstancePath {
            tree: tree.to_owned(),
            indices: Vec::new(),
        }
    }

    pub fn new(tree: &str, indices: impl Into<Vec<usize>>) -> Self {
        InstancePath {
            tree: tree.to_owned(),
            indices: indices.into(),
        }
    }

    pub fn child(&self, index: usize) -> Self {
        let mut indices = self.indices.clone();
        indices.push(index);
        InstancePath {
            tree: self.tree.clone(),
            indices,
        }
    }
}

impl fmt::Display for InstancePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.tree)?;
        for (i, idx) in self.indices.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            write!(f, "{idx}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("unknown instance tree `{0}`")]
    UnknownTree(String),
    #[error("index {index} out of range at depth {depth} (node has {len} children)")]
    IndexOutOfRange {
        depth: usize,
        index: usize,
        len: usize,
    },
    #[error("type `{type_path}` does not resolve in type tree `{type_tree}`")]
    UnknownType {
        type_tree: String,
        type_path: String,
    },
}

/// Which node in the lookup chain supplied a resolved attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "level", rename_all = "snake_case")]
pub enum Origin {
    Instance,
    AncestorInstance { levels_up: usize },
    Type,
    AncestorType { levels_up: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedAttribute {
    pub name: String,
    pub value: Value,
    pub origin: Origin,
}

/// Looks `name` up through an explicit chain. Both slices are ordered
/// root-to-leaf; the leaf of `instances` is the queried instance and the leaf
/// of `types` is its type.
pub(crate) fn lookup<'a>(
    instances: &[&'a InstanceNode],
    types: &[&'a TypeNode],
    name: &str,
) -> Option<(&'a AttValue, Origin)> {
    let key = name.to_lowercase();
    for (up, node) in instances.iter().rev().enumerate() {
        if let Some(v) = find_key(&node.att_values, &key) {
            let origin = if up == 0 {
                Origin::Instance
            } else {
                Origin::AncestorInstance { levels_up: up }
            };
            return Some((v, origin));
        }
    }
    for (up, node) in types.iter().rev().enumerate() {
        if let Some(v) = find_key(&node.att_values, &key) {
            let origin = if up == 0 {
                Origin::Type
            } else {
                Origin::AncestorType { levels_up: up }
            };
            return Some((v, origin));
        }
    }
    None
}

impl Document {
    pub fn type_tree(&self, name: &str) -> Option<&TypeTree> {
        self.type_trees.iter().find(|t| t.name == name)
    }

    pub fn instance_tree(&self, name: &str) -> Option<&InstanceTree> {
        self.instance_trees.iter().find(|t| t.name == name)
    }

    /// Type nodes along `type_path`, root first.
    pub fn type_chain<'a>(&'a self, type_tree: &str, type_path: &str) -> Option<Vec<&'a TypeNode>> {
        let tree = self.type_tree(type_tree)?;
        type_chain_in(&tree.root, type_path)
    }

    /// The instance at `path`.
    pub fn resolve_path(&self, path: &InstancePath) -> Result<&InstanceNode, PathError> {
        Ok(*self
            .instance_chain(path)?
            .last()
            .expect("chain always contains the root"))
    }

    /// Instances from the tree root down to the one at `path`.
    pub fn instance_chain(&self, path: &InstancePath) -> Result<Vec<&InstanceNode>, PathError> {
        let tree = self
            .instance_tree(&path.tree)
            .ok_or_else(|| PathError::UnknownTree(path.tree.clone()))?;
        let mut node = &tree.root;
        let mut chain = Vec::with_capacity(path.indices.len() + 1);
        chain.push(node);
        for (depth, &index) in path.indices.iter().enumerate() {
            node = node.children.get(index).ok_or(PathError::IndexOutOfRange {
                depth,
                index,
                len: node.children.len(),
            })?;
            chain.push(node);
        }
        Ok(chain)
    }

    /// Re-derives the path of a node borrowed from this document (pointer identity).
    pub fn path_of(&self, node: &InstanceNode) -> Option<InstancePath> {
        fn search(cur: &InstanceNode, target: &InstanceNode, trail: &mut Vec<usize>) -> bool {
            if std::ptr::eq(cur, target) {
                return true;
            }
            for (i, child) in cur.children.iter().enumerate() {
                trail.push(i);
                if search(child, target, trail) {
                    return true;
                }
                trail.pop();
            }
            false
        }
        self.instance_trees.iter().find_map(|tree| {
            let mut trail = Vec::new();
            search(&tree.root, node, &mut trail).then(|| InstancePath::new(&tree.name, trail))
        })
    }

    fn chains(&self, path: &InstancePath) -> Result<(Vec<&InstanceNode>, Vec<&TypeNode>), PathError> {
        let instances = self.instance_chain(path)?;
        let tree = self
            .instance_tree(&path.tree)
            .expect("instance_chain checked the tree");
        let leaf = instances.last().expect("non-empty chain");
        let types = self
            .type_chain(&tree.type_tree, &leaf.type_path)
            .ok_or_else(|| PathError::UnknownType {
                type_tree: tree.type_tree.clone(),
                type_path: leaf.type_path.clone(),
            })?;
        Ok((instances, types))
    }

    /// First definition of `name` along the lookup chain, case-insensitively.
    pub fn resolve_attribute(
        &self,
        path: &InstancePath,
        name: &str,
    ) -> Result<Option<&AttValue>, PathError> {
        let (instances, types) = self.chains(path)?;
        Ok(lookup(&instances, &types, name).map(|(v, _)| v))
    }

    /// Every attribute name visible from `path`, resolved, sorted by name.
    pub fn resolve_all_attributes(
        &self,
        path: &InstancePath,
    ) -> Result<Vec<ResolvedAttribute>, PathError> {
        let (instances, types) = self.chains(path)?;
        let mut seen: BTreeMap<&str, ResolvedAttribute> = BTreeMap::new();
        let names = instances
            .iter()
            .flat_map(|n| n.att_values.iter())
            .chain(types.iter().flat_map(|n| n.att_values.iter()))
            .map(|v| v.name.as_str());
        for name in names {
            if seen.contains_key(name) {
                continue;
            }
            if let Some((v, origin)) = lookup(&instances, &types, name) {
                seen.insert(
                    name,
                    ResolvedAttribute {
                        name: v.name.clone(),
                        value: v.value.clone(),
                        origin,
                    },
                );
            }
        }
        Ok(seen.into_values().collect())
    }

    /// Structural check of every document invariant. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();

        let mut names = HashSet::new();
        for tree in &self.type_trees {
            if !names.insert(tree.name.as_str()) {
                out.push(Violation::new(
                    ViolationCode::DuplicateTreeName,
                    format!("typetree:{}", tree.name),
                ));
            }
            validate_type(&tree.root, &format!("typetree:{}/{}", tree.name, tree.root.name), &mut out);
        }

        let mut names = HashSet::new();
        for tree in &self.instance_trees {
            let loc = format!("instancetree:{}", tree.name);
            if !names.insert(tree.name.as_str()) {
                out.push(Violation::new(ViolationCode::DuplicateTreeName, loc.clone()));
            }
            match self.type_tree(&tree.type_tree) {
                None => out.push(Violation::new(ViolationCode::UnknownTypeTree, loc)),
                Some(tt) => {
                    let path = InstancePath::root(&tree.name);
                    validate_instance(&tree.root, &tt.root, &path, &mut out);
                }
            }
        }

        let mut layers = HashSet::new();
        for layer in &self.layer_order {
            if !layers.insert(layer.as_str()) {
                out.push(Violation::new(
                    ViolationCode::DuplicateLayer,
                    format!("layer:{layer}"),
                ));
            }
        }
        out
    }

    pub fn type_count(&self) -> usize {
        fn count(n: &TypeNode) -> usize {
            1 + n.children.iter().map(count).sum::<usize>()
        }
        self.type_trees.iter().map(|t| count(&t.root)).sum()
    }

    pub fn instance_count(&self) -> usize {
        self.instance_trees
            .iter()
            .map(|t| walk_instances(&t.root, &mut |_| ()))
            .sum()
    }

    pub fn point_count(&self) -> usize {
        let mut points = 0;
        for t in &self.instance_trees {
            walk_instances(&t.root, &mut |n| points += n.points.len());
        }
        points
    }
}

fn walk_instances(node: &InstanceNode, f: &mut impl FnMut(&InstanceNode)) -> usize {
    f(node);
    1 + node
        .children
        .iter()
        .map(|c| walk_instances(c, f))
        .sum::<usize>()
}

fn type_chain_in<'a>(root: &'a TypeNode, type_path: &str) -> Option<Vec<&'a TypeNode>> {
    let mut segments = type_path.split('/');
    if segments.next()? != root.name {
        return None;
    }
    let mut node = root;
    let mut chain = vec![node];
    for seg in segments {
        node = node.child(seg)?;
        chain.push(node);
    }
    Some(chain)
}

/// True when `name` is a legal attribute key (non-empty, no whitespace, lowercased).
pub fn is_valid_att_name(name: &str) -> bool {
    !name.is_empty() && !name.chars().any(char::is_whitespace) && name.to_lowercase() == name
}

fn is_valid_type_name(name: &str) -> bool {
    !name.is_empty() && !name.contains('/')
}

fn validate_values(values: &[AttValue], loc: &str, out: &mut Vec<Violation>) {
    let mut seen = HashSet::new();
    for v in values {
        let at = format!("{loc}#{}", v.name);
        if !is_valid_att_name(&v.name) {
            out.push(Violation::new(ViolationCode::InvalidAttributeName, at.clone()));
        }
        if !seen.insert(v.name.to_lowercase()) {
            out.push(Violation::new(ViolationCode::DuplicateAttValue, at.clone()));
        }
        match &v.value {
            Value::Real(r) if !r.is_finite() => {
                out.push(Violation::new(ViolationCode::NonFiniteValue, at))
            }
            Value::Color(c) if !c.is_valid() => {
                out.push(Violation::new(ViolationCode::ColorOutOfRange, at))
            }
            _ => {}
        }
    }
}

fn validate_type(node: &TypeNode, loc: &str, out: &mut Vec<Violation>) {
    if !is_valid_type_name(&node.name) {
        out.push(Violation::new(ViolationCode::InvalidTypeName, loc.to_owned()));
    }
    let mut defs = HashSet::new();
    for d in &node.att_defs {
        let at = format!("{loc}#{}", d.name);
        if !is_valid_att_name(&d.name) {
            out.push(Violation::new(ViolationCode::InvalidAttributeName, at.clone()));
        }
        if !defs.insert(d.name.to_lowercase()) {
            out.push(Violation::new(ViolationCode::DuplicateAttDef, at));
        }
    }
    validate_values(&node.att_values, loc, out);
    let mut siblings = HashSet::new();
    for child in &node.children {
        let child_loc = format!("{loc}/{}", child.name);
        if !siblings.insert(child.name.as_str()) {
            out.push(Violation::new(
                ViolationCode::DuplicateSiblingType,
                child_loc.clone(),
            ));
        }
        validate_type(child, &child_loc, out);
    }
}

fn validate_instance(
    node: &InstanceNode,
    type_root: &TypeNode,
    path: &InstancePath,
    out: &mut Vec<Violation>,
) {
    let loc = path.to_string();
    if type_chain_in(type_root, &node.type_path).is_none() {
        out.push(Violation::new(ViolationCode::UnknownType, loc.clone()));
    }
    validate_values(&node.att_values, &loc, out);
    if node.points.iter().any(|p| !p.is_finite()) {
        out.push(Violation::new(ViolationCode::NonFinitePoint, loc));
    }
    for (i, child) in node.children.iter().enumerate() {
        validate_instance(child, type_root, &path.child(i), out);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    InvalidAttributeName,
    DuplicateAttValue,
    DuplicateAttDef,
    NonFiniteValue,
    ColorOutOfRange,
    NonFinitePoint,
    InvalidTypeName,
    DuplicateSiblingType,
    UnknownType,
    UnknownTypeTree,
    DuplicateTreeName,
    DuplicateLayer,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationCode::InvalidAttributeName => "invalid_attribute_name",
            ViolationCode::DuplicateAttValue => "duplicate_att_value",
            ViolationCode::DuplicateAttDef => "duplicate_att_def",
            ViolationCode::NonFiniteValue => "non_finite_value",
            ViolationCode::ColorOutOfRange => "color_out_of_range",
            ViolationCode::NonFinitePoint => "non_finite_point",
            ViolationCode::InvalidTypeName => "invalid_type_name",
            ViolationCode::DuplicateSiblingType => "duplicate_sibling_type",
            ViolationCode::UnknownType => "unknown_type",
            ViolationCode::UnknownTypeTree => "unknown_type_tree",
            ViolationCode::DuplicateTreeName => "duplicate_tree_name",
            ViolationCode::DuplicateLayer => "duplicate_layer",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A broken invariant and where it was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
}

impl Violation {
    pub fn new(code: ViolationCode, path: String) -> Self {
        Violation { code, path }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}", self.code, self.path)
    }
}
