//! Transform-hierarchy evaluation and field updates with ROUTE propagation.

use std::collections::VecDeque;

use nalgebra::{Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::x3d::{event_field_name, Document, FieldType, FieldValue, Node, NodePath, Rotation};

/// Row-major homogeneous transform.
pub type Matrix4 = nalgebra::Matrix4<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("no node at {0}")]
    PathNotFound(String),
    #[error("{node} has no field {field}")]
    UnknownField { node: String, field: String },
    #[error("{node}.{field} is {expected}, got {found}")]
    TypeMismatch {
        node: String,
        field: String,
        expected: FieldType,
        found: FieldType,
    },
}

/// Addresses a node by DEF name or by index path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeRef {
    Def(String),
    Path(NodePath),
}

impl NodeRef {
    pub fn resolve(&self, doc: &Document) -> Result<NodePath, SceneError> {
        match self {
            NodeRef::Def(name) => doc
                .find_def(name)
                .ok_or_else(|| SceneError::PathNotFound(format!("DEF \"{name}\""))),
            NodeRef::Path(path) => doc
                .node(path)
                .map(|_| path.clone())
                .ok_or_else(|| SceneError::PathNotFound(path.to_string())),
        }
    }
}

impl From<&str> for NodeRef {
    fn from(def: &str) -> Self {
        NodeRef::Def(def.to_string())
    }
}

impl From<NodePath> for NodeRef {
    fn from(path: NodePath) -> Self {
        NodeRef::Path(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldUpdate {
    pub target: NodeRef,
    pub field: String,
    pub value: FieldValue,
    pub tick: u64,
}

pub fn matrix_from_row_major(m: &[f64; 16]) -> Matrix4 {
    Matrix4::from_row_slice(m)
}

pub fn matrix_to_row_major(m: &Matrix4) -> [f64; 16] {
    let mut out = [0.0; 16];
    for r in 0..4 {
        for c in 0..4 {
            out[r * 4 + c] = m[(r, c)];
        }
    }
    out
}

pub fn rotation_quaternion(r: &Rotation) -> UnitQuaternion<f64> {
    let [x, y, z] = r.axis();
    UnitQuaternion::from_axis_angle(&Unit::new_unchecked(Vector3::new(x, y, z)), r.angle())
}

/// Local frame of a Transform-like node (translation after rotation);
/// identity for every other kind.
pub fn local_transform(node: &Node) -> Matrix4 {
    if !node.kind.is_transform() {
        return Matrix4::identity();
    }
    let t = node.vec3("translation").unwrap_or([0.0; 3]);
    let r = node
        .field("rotation")
        .and_then(FieldValue::as_rotation)
        .unwrap_or(Rotation::IDENTITY);
    Translation3::new(t[0], t[1], t[2]).to_homogeneous() * rotation_quaternion(&r).to_homogeneous()
}

/// Product of the Transform frames from the root down to and including the
/// addressed node.
pub fn world_transform(doc: &Document, node: &NodeRef) -> Result<Matrix4, SceneError> {
    let path = node.resolve(doc)?;
    Ok(path_transform(doc, &path))
}

pub(crate) fn path_transform(doc: &Document, path: &NodePath) -> Matrix4 {
    path.ancestry()
        .filter_map(|p| doc.node(&p))
        .fold(Matrix4::identity(), |acc, n| acc * local_transform(n))
}

pub fn transform_point(m: &Matrix4, p: [f64; 3]) -> [f64; 3] {
    let v = m * nalgebra::Vector4::new(p[0], p[1], p[2], 1.0);
    [v.x, v.y, v.z]
}

/// Applies an update and returns the new document.
pub fn apply_update(doc: &Document, update: &FieldUpdate) -> Result<Document, SceneError> {
    apply_update_traced(doc, update).map(|(doc, _)| doc)
}

/// As [`apply_update`], also returning the indices of the routes that fired,
/// in firing order.
///
/// Events propagate breadth-first; candidate routes are visited in document
/// order and each route fires at most once per update, which bounds
/// propagation through cycles.
pub fn apply_update_traced(
    doc: &Document,
    update: &FieldUpdate,
) -> Result<(Document, Vec<usize>), SceneError> {
    let mut out = doc.clone();
    let path = update.target.resolve(&out)?;
    let field = event_field_name(&update.field).to_string();
    set_field(&mut out, &path, &field, update.value.clone())?;

    let mut fired = vec![false; out.routes.len()];
    let mut order = Vec::new();
    let mut queue = VecDeque::new();
    if let Some(def) = out.node(&path).and_then(|n| n.def.clone()) {
        queue.push_back((def, field, update.value.clone()));
    }

    while let Some((from, field, value)) = queue.pop_front() {
        // Indexed because the body writes into `out`.
        #[allow(clippy::needless_range_loop)]
        for i in 0..out.routes.len() {
            let route = &out.routes[i];
            if fired[i] || route.from_node != from || event_field_name(&route.from_field) != field {
                continue;
            }
            fired[i] = true;
            order.push(i);
            let to_node = route.to_node.clone();
            let to_field = event_field_name(&route.to_field).to_string();
            let target = out
                .find_def(&to_node)
                .ok_or_else(|| SceneError::PathNotFound(format!("DEF \"{to_node}\"")))?;
            set_field(&mut out, &target, &to_field, value.clone())?;
            queue.push_back((to_node, to_field, value.clone()));
        }
    }
    Ok((out, order))
}

fn set_field(
    doc: &mut Document,
    path: &NodePath,
    field: &str,
    value: FieldValue,
) -> Result<(), SceneError> {
    let node = doc
        .node_mut(path)
        .ok_or_else(|| SceneError::PathNotFound(path.to_string()))?;
    let label = node
        .def
        .clone()
        .unwrap_or_else(|| format!("{} at {path}", node.kind));
    let spec = node
        .kind
        .field_spec(field)
        .ok_or_else(|| SceneError::UnknownField {
            node: label.clone(),
            field: field.to_string(),
        })?;
    if spec.ty != value.field_type() {
        return Err(SceneError::TypeMismatch {
            node: label,
            field: field.to_string(),
            expected: spec.ty,
            found: value.field_type(),
        });
    }
    node.set_field(field, value)
        .expect("checked against the schema");
    Ok(())
}
