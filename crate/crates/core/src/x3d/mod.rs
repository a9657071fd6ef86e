//! X3D scene documents, restricted to the XML encoding and to the node set
//! needed by the haptics, linac and e-learning scenes.
//!
//! A [`Document`] is a plain value: a `Scene` root [`Node`], its subtree and
//! the `ROUTE` statements. Every node carries every field legal for its kind,
//! with absent attributes filled from the schema defaults in [`schema`].

mod parse;
pub mod schema;
mod serialize;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_x3d, parse_x3d_bytes, Parsed};
pub use schema::{FieldType, NodeKind};
pub use serialize::serialize_x3d;
pub use validate::{event_field_name, validate};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum X3dError {
    #[error("malformed markup: {0}")]
    MalformedMarkup(String),
    #[error("classic VRML encoding is not supported, only the XML encoding")]
    ClassicVrml,
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("field {node}.{field}: cannot parse {value:?} as {expected}")]
    FieldTypeError {
        node: String,
        field: String,
        value: String,
        expected: FieldType,
    },
    #[error("field {node}.{field}: expected {expected} values, found {found}")]
    BadFieldCount {
        node: String,
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("field {node}.{field}: rotation axis has zero length")]
    ZeroRotationAxis { node: String, field: String },
    #[error("{kind} has no field named {field}")]
    UnknownField { kind: NodeKind, field: String },
    #[error("field {kind}.{field} is {expected}, got {found}")]
    TypeMismatch {
        kind: NodeKind,
        field: String,
        expected: FieldType,
        found: FieldType,
    },
}

/// An axis-angle rotation. The axis is unit length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    axis: [f64; 3],
    angle: f64,
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation {
        axis: [0.0, 0.0, 1.0],
        angle: 0.0,
    };

    /// Returns `None` for a zero-length or non-finite axis.
    pub fn new(axis: [f64; 3], angle: f64) -> Option<Self> {
        let norm = |a: [f64; 3]| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        let scale = axis[0].abs().max(axis[1].abs()).max(axis[2].abs());
        if !(scale > 0.0 && scale.is_finite()) || !angle.is_finite() {
            return None;
        }
        // Already-unit axes are kept bit-for-bit so that re-parsing a
        // serialized rotation is a fixed point.
        if (norm(axis) - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Some(Rotation { axis, angle });
        }
        // Scaling first keeps tiny or huge axes from under/overflowing.
        let scaled = axis.map(|c| c / scale);
        let n = norm(scaled);
        Some(Rotation {
            axis: scaled.map(|c| c / n),
            angle,
        })
    }

    pub fn axis(&self) -> [f64; 3] {
        self.axis
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }
}

/// A typed field value.
///
/// Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum FieldValue {
    SFFloat(f64),
    SFVec3f([f64; 3]),
    SFRotation(Rotation),
    SFMatrix3f([f64; 9]),
    SFMatrix4f([f64; 16]),
    SFString(String),
    SFColor([f64; 3]),
    MFFloat(Vec<f64>),
}

impl FieldValue {
    pub fn field_type(&self) -> FieldType {
        match self {
            FieldValue::SFFloat(_) => FieldType::SFFloat,
            FieldValue::SFVec3f(_) => FieldType::SFVec3f,
            FieldValue::SFRotation(_) => FieldType::SFRotation,
            FieldValue::SFMatrix3f(_) => FieldType::SFMatrix3f,
            FieldValue::SFMatrix4f(_) => FieldType::SFMatrix4f,
            FieldValue::SFString(_) => FieldType::SFString,
            FieldValue::SFColor(_) => FieldType::SFColor,
            FieldValue::MFFloat(_) => FieldType::MFFloat,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match self {
            FieldValue::SFFloat(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_vec3(&self) -> Option<[f64; 3]> {
        match self {
            FieldValue::SFVec3f(v) | FieldValue::SFColor(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_rotation(&self) -> Option<Rotation> {
        match self {
            FieldValue::SFRotation(r) => Some(*r),
            _ => None,
        }
    }

    /// All numeric components in declaration order; empty for strings.
    pub fn components(&self) -> Vec<f64> {
        match self {
            FieldValue::SFFloat(v) => vec![*v],
            FieldValue::SFVec3f(v) | FieldValue::SFColor(v) => v.to_vec(),
            FieldValue::SFRotation(r) => vec![r.axis[0], r.axis[1], r.axis[2], r.angle],
            FieldValue::SFMatrix3f(m) => m.to_vec(),
            FieldValue::SFMatrix4f(m) => m.to_vec(),
            FieldValue::MFFloat(v) => v.clone(),
            FieldValue::SFString(_) => Vec::new(),
        }
    }
}

/// Index path from the Scene root; the empty path is the root itself.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn child(&self, index: usize) -> Self {
        let mut v = self.0.clone();
        v.push(index);
        NodePath(v)
    }

    pub fn parent(&self) -> Option<Self> {
        let (_, rest) = self.0.split_last()?;
        Some(NodePath(rest.to_vec()))
    }

    /// Every prefix from the root down to (and including) this path.
    pub fn ancestry(&self) -> impl Iterator<Item = NodePath> + '_ {
        (0..=self.0.len()).map(move |n| NodePath(self.0[..n].to_vec()))
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "/")?;
        for (i, idx) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "/")?;
            }
            write!(f, "{idx}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub def: Option<String>,
    fields: BTreeMap<String, FieldValue>,
    pub children: Vec<Child>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Child {
    pub container_field: String,
    pub node: Node,
}

impl Node {
    /// A node with every legal field set to its default.
    pub fn new(kind: NodeKind) -> Self {
        let fields = kind
            .field_specs()
            .iter()
            .map(|spec| (spec.name.to_string(), spec.default_value()))
            .collect();
        Node {
            kind,
            def: None,
            fields,
            children: Vec::new(),
        }
    }

    pub fn with_def(mut self, def: impl Into<String>) -> Self {
        self.def = Some(def.into());
        self
    }

    pub fn field(&self, name: &str) -> Option<&FieldValue> {
        self.fields.get(name)
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &FieldValue)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn float(&self, name: &str) -> Option<f64> {
        self.field(name).and_then(FieldValue::as_float)
    }

    pub fn vec3(&self, name: &str) -> Option<[f64; 3]> {
        self.field(name).and_then(FieldValue::as_vec3)
    }

    /// Replaces a field, checking that the field exists for this kind and
    /// that the value has the declared type.
    pub fn set_field(&mut self, name: &str, value: FieldValue) -> Result<(), X3dError> {
        let spec = self
            .kind
            .field_spec(name)
            .ok_or_else(|| X3dError::UnknownField {
                kind: self.kind,
                field: name.to_string(),
            })?;
        if spec.ty != value.field_type() {
            return Err(X3dError::TypeMismatch {
                kind: self.kind,
                field: name.to_string(),
                expected: spec.ty,
                found: value.field_type(),
            });
        }
        self.fields.insert(spec.name.to_string(), value);
        Ok(())
    }

    /// Builder form of [`Node::set_field`]; panics on a schema violation.
    pub fn with_field(mut self, name: &str, value: FieldValue) -> Self {
        if let Err(e) = self.set_field(name, value) {
            panic!("{e}");
        }
        self
    }

    /// Appends a child under its kind's default container field.
    pub fn push_child(&mut self, node: Node) {
        let container_field = node.kind.default_container_field().to_string();
        self.children.push(Child {
            container_field,
            node,
        });
    }

    pub fn with_child(mut self, node: Node) -> Self {
        self.push_child(node);
        self
    }

    /// Number of nodes in this subtree, including `self`.
    pub fn subtree_len(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|c| c.node.subtree_len())
            .sum::<usize>()
    }

    /// Depth-first pre-order walk yielding each node with its path relative
    /// to `self`.
    pub fn walk(&self) -> Vec<(NodePath, &Node)> {
        fn rec<'a>(node: &'a Node, path: NodePath, out: &mut Vec<(NodePath, &'a Node)>) {
            out.push((path.clone(), node));
            for (i, c) in node.children.iter().enumerate() {
                rec(&c.node, path.child(i), out);
            }
        }
        let mut out = Vec::new();
        rec(self, NodePath::root(), &mut out);
        out
    }
}

/// `<ROUTE fromNode fromField toNode toField/>`; node names are DEF names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Route {
    pub from_node: String,
    pub from_field: String,
    pub to_node: String,
    pub to_field: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub root: Node,
    pub routes: Vec<Route>,
}

impl Default for Document {
    fn default() -> Self {
        Document {
            root: Node::new(NodeKind::Scene),
            routes: Vec::new(),
        }
    }
}

impl Document {
    pub fn new(root: Node) -> Self {
        Document {
            root,
            routes: Vec::new(),
        }
    }

    pub fn node(&self, path: &NodePath) -> Option<&Node> {
        let mut node = &self.root;
        for &i in &path.0 {
            node = &node.children.get(i)?.node;
        }
        Some(node)
    }

    pub fn node_mut(&mut self, path: &NodePath) -> Option<&mut Node> {
        let mut node = &mut self.root;
        for &i in &path.0 {
            node = &mut node.children.get_mut(i)?.node;
        }
        Some(node)
    }

    /// DEF name to path. On duplicates the first occurrence in document
    /// order wins; [`validate`] reports the rest.
    pub fn defs(&self) -> BTreeMap<String, NodePath> {
        let mut out = BTreeMap::new();
        for (path, node) in self.root.walk() {
            if let Some(def) = &node.def {
                out.entry(def.clone()).or_insert(path);
            }
        }
        out
    }

    pub fn find_def(&self, name: &str) -> Option<NodePath> {
        self.root
            .walk()
            .into_iter()
            .find(|(_, n)| n.def.as_deref() == Some(name))
            .map(|(p, _)| p)
    }

    /// Nodes in the tree, excluding the Scene root.
    pub fn node_count(&self) -> usize {
        self.root.subtree_len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticKind {
    UnknownElement,
    UnknownField,
    UnsupportedAttribute,
    BadFieldCount,
    DanglingRoute,
    RouteTypeMismatch,
    DuplicateDef,
    IllegalContainerField,
    NonPositiveDimension,
    NegativeValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}
