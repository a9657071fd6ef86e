use std::collections::BTreeMap;

use super::{Diagnostic, DiagnosticKind, Document, FieldType, Node, NodeKind};

/// Maps X3D event names (`set_translation`, `translation_changed`) to the
/// underlying field name.
pub fn event_field_name(name: &str) -> &str {
    let name = name.strip_prefix("set_").unwrap_or(name);
    name.strip_suffix("_changed").unwrap_or(name)
}

/// Structural checks on a document. Diagnostics are data; this never fails.
pub fn validate(doc: &Document) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let nodes = doc.root.walk();

    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for (path, node) in &nodes {
        if let Some(def) = node.def.as_deref() {
            let count = seen.entry(def).or_default();
            *count += 1;
            if *count > 1 {
                out.push(Diagnostic::new(
                    DiagnosticKind::DuplicateDef,
                    format!("DEF \"{def}\" at {path} is already defined"),
                ));
            }
        }
    }

    for (path, node) in &nodes {
        for child in &node.children {
            if !node.kind.accepts(&child.container_field, child.node.kind) {
                out.push(Diagnostic::new(
                    DiagnosticKind::IllegalContainerField,
                    format!(
                        "{} under {} at {path} cannot use containerField \"{}\"",
                        child.node.kind, node.kind, child.container_field
                    ),
                ));
            }
        }
        check_ranges(node, &path.to_string(), &mut out);
    }

    let defs = doc.defs();
    for r in &doc.routes {
        let end = |name: &str, field: &str| -> Result<FieldType, String> {
            let path = defs
                .get(name)
                .ok_or_else(|| format!("no node named \"{name}\""))?;
            let node = doc.node(path).expect("defs() yields live paths");
            node.kind
                .field_spec(event_field_name(field))
                .map(|s| s.ty)
                .ok_or_else(|| format!("{} \"{name}\" has no field {field}", node.kind))
        };
        match (
            end(&r.from_node, &r.from_field),
            end(&r.to_node, &r.to_field),
        ) {
            (Ok(a), Ok(b)) if a != b => out.push(Diagnostic::new(
                DiagnosticKind::RouteTypeMismatch,
                format!(
                    "ROUTE {}.{} ({a}) -> {}.{} ({b})",
                    r.from_node, r.from_field, r.to_node, r.to_field
                ),
            )),
            (Ok(_), Ok(_)) => {}
            (Err(e), _) | (_, Err(e)) => out.push(Diagnostic::new(
                DiagnosticKind::DanglingRoute,
                format!(
                    "ROUTE {}.{} -> {}.{}: {e}",
                    r.from_node, r.from_field, r.to_node, r.to_field
                ),
            )),
        }
    }
    out
}

fn check_ranges(node: &Node, at: &str, out: &mut Vec<Diagnostic>) {
    let positive = |name: &str, out: &mut Vec<Diagnostic>| {
        let values = node.field(name).map(|v| v.components()).unwrap_or_default();
        if values.iter().any(|v| *v <= 0.0) {
            out.push(Diagnostic::new(
                DiagnosticKind::NonPositiveDimension,
                format!(
                    "{}.{name} at {at} must be positive, got {values:?}",
                    node.kind
                ),
            ));
        }
    };
    match node.kind {
        NodeKind::Sphere => positive("radius", out),
        NodeKind::Cylinder => {
            positive("radius", out);
            positive("height", out);
        }
        NodeKind::Box => positive("size", out),
        NodeKind::DynamicTransform => positive("mass", out),
        NodeKind::FrictionalSurface => {
            for name in ["stiffness", "damping", "staticFriction", "dynamicFriction"] {
                if node.float(name).is_some_and(|v| v < 0.0) {
                    out.push(Diagnostic::new(
                        DiagnosticKind::NegativeValue,
                        format!("{}.{name} at {at} must not be negative", node.kind),
                    ));
                }
            }
        }
        _ => {}
    }
}
