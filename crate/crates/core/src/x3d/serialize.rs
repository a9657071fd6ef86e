use std::fmt::Write;

use quick_xml::escape::escape;

use super::{Document, FieldValue, Node};

/// Canonical XML encoding: a `<Scene>` root, two-space indentation, only
/// non-default fields (sorted by name), `containerField` only where it differs
/// from the kind's default, and routes after the node tree.
pub fn serialize_x3d(doc: &Document) -> String {
    let mut out = String::new();
    if doc.root.children.is_empty() && doc.routes.is_empty() {
        out.push_str("<Scene/>\n");
        return out;
    }
    out.push_str("<Scene>\n");
    for child in &doc.root.children {
        write_node(&mut out, &child.node, &child.container_field, 1);
    }
    for r in &doc.routes {
        let _ = writeln!(
            out,
            "  <ROUTE fromNode=\"{}\" fromField=\"{}\" toNode=\"{}\" toField=\"{}\"/>",
            escape(r.from_node.as_str()),
            escape(r.from_field.as_str()),
            escape(r.to_node.as_str()),
            escape(r.to_field.as_str())
        );
    }
    out.push_str("</Scene>\n");
    out
}

fn write_node(out: &mut String, node: &Node, container_field: &str, depth: usize) {
    let indent = "  ".repeat(depth);
    let _ = write!(out, "{indent}<{}", node.kind.element_name());
    if let Some(def) = &node.def {
        let _ = write!(out, " DEF=\"{}\"", escape(def.as_str()));
    }
    for spec in node.kind.field_specs().iter() {
        let Some(value) = node.field(spec.name) else {
            continue;
        };
        if *value == spec.default_value() {
            continue;
        }
        let _ = write!(out, " {}=\"{}\"", spec.name, format_value(value));
    }
    if container_field != node.kind.default_container_field() {
        let _ = write!(out, " containerField=\"{}\"", escape(container_field));
    }
    if node.children.is_empty() {
        out.push_str("/>\n");
        return;
    }
    out.push_str(">\n");
    for child in &node.children {
        write_node(out, &child.node, &child.container_field, depth + 1);
    }
    let _ = writeln!(out, "{indent}</{}>", node.kind.element_name());
}

fn format_value(value: &FieldValue) -> String {
    match value {
        FieldValue::SFString(s) => escape(s.as_str()).into_owned(),
        other => other
            .components()
            .into_iter()
            .map(format_number)
            .collect::<Vec<_>>()
            .join(" "),
    }
}

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn format_number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
