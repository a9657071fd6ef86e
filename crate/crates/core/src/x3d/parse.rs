use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, XmlVersion};

use super::schema::FieldSpec;
use super::{
    Child, Diagnostic, DiagnosticKind, Document, FieldType, FieldValue, Node, NodeKind, Rotation,
    Route, X3dError,
};

/// A parsed document plus the non-fatal diagnostics collected on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub document: Document,
    pub diagnostics: Vec<Diagnostic>,
}

enum Frame {
    /// `<X3D>` or the `<Scene>` root; nodes directly below attach to the root.
    Wrapper { name: String },
    Node {
        name: String,
        node: Node,
        container: Option<String>,
    },
    /// Element whose subtree is ignored.
    Skip { name: String },
}

impl Frame {
    fn name(&self) -> &str {
        match self {
            Frame::Wrapper { name } | Frame::Node { name, .. } | Frame::Skip { name } => name,
        }
    }
}

pub fn parse_x3d_bytes(bytes: &[u8]) -> Result<Parsed, X3dError> {
    let text = std::str::from_utf8(bytes).map_err(|_| X3dError::InvalidUtf8)?;
    parse_x3d(text)
}

/// Parses the XML encoding of an X3D scene.
///
/// Documents may be rooted at `<X3D>`, at `<Scene>`, or be a bare fragment of
/// nodes, which is wrapped in an implicit Scene. Unknown elements and
/// attributes are skipped and reported in [`Parsed::diagnostics`].
pub fn parse_x3d(text: &str) -> Result<Parsed, X3dError> {
    let head = text.trim_start_matches('\u{feff}').trim_start();
    if head.starts_with("#VRML") || head.starts_with("#X3D") {
        return Err(X3dError::ClassicVrml);
    }

    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);

    let mut builder = Builder::default();
    loop {
        let event = reader.read_event().map_err(|e| {
            X3dError::MalformedMarkup(format!("at byte {}: {e}", reader.buffer_position()))
        })?;
        match event {
            Event::Start(e) => builder.open(&e, false)?,
            Event::Empty(e) => builder.open(&e, true)?,
            Event::End(e) => {
                let name = <str>::to_owned(e.name().as_ref());
                builder.close(&name)?;
            }
            Event::Eof => break,
            // Character data, comments, declarations and processing
            // instructions carry nothing for this subset.
            _ => {}
        }
    }
    builder.finish()
}

#[derive(Default)]
struct Builder {
    stack: Vec<Frame>,
    root: Option<Node>,
    routes: Vec<Route>,
    diagnostics: Vec<Diagnostic>,
    saw_element: bool,
}

impl Builder {
    fn root(&mut self) -> &mut Node {
        self.root.get_or_insert_with(|| Node::new(NodeKind::Scene))
    }

    fn inside_node(&self) -> bool {
        self.stack.iter().any(|f| matches!(f, Frame::Node { .. }))
    }

    fn skipping(&self) -> bool {
        matches!(self.stack.last(), Some(Frame::Skip { .. }))
    }

    fn open(&mut self, e: &BytesStart<'_>, empty: bool) -> Result<(), X3dError> {
        self.saw_element = true;
        let name = <str>::to_owned(e.name().as_ref());
        let attrs = attributes(e)?;

        let frame = if self.skipping() {
            Frame::Skip { name }
        } else if name == "X3D" && self.stack.is_empty() {
            Frame::Wrapper { name }
        } else if name == "head"
            && matches!(self.stack.last(), Some(Frame::Wrapper { name }) if name == "X3D")
        {
            Frame::Skip { name }
        } else if name == "Scene" && !self.inside_node() && self.root.is_none() {
            self.root();
            Frame::Wrapper { name }
        } else if name == "ROUTE" {
            self.route(&attrs);
            Frame::Skip { name }
        } else if let Some(kind) =
            NodeKind::from_element_name(&name).filter(|k| *k != NodeKind::Scene)
        {
            let (node, container) = self.build_node(kind, &attrs)?;
            Frame::Node {
                name,
                node,
                container,
            }
        } else {
            self.diagnostics.push(Diagnostic::new(
                DiagnosticKind::UnknownElement,
                format!("skipped unsupported element <{name}> and its subtree"),
            ));
            Frame::Skip { name }
        };

        self.stack.push(frame);
        if empty {
            self.close_top();
        }
        Ok(())
    }

    fn close(&mut self, name: &str) -> Result<(), X3dError> {
        match self.stack.last() {
            Some(top) if top.name() == name => {
                self.close_top();
                Ok(())
            }
            Some(top) => Err(X3dError::MalformedMarkup(format!(
                "</{name}> closes <{}>",
                top.name()
            ))),
            None => Err(X3dError::MalformedMarkup(format!("unexpected </{name}>"))),
        }
    }

    fn close_top(&mut self) {
        let Some(Frame::Node {
            node, container, ..
        }) = self.stack.pop()
        else {
            return;
        };
        let container_field =
            container.unwrap_or_else(|| node.kind.default_container_field().to_string());
        let child = Child {
            container_field,
            node,
        };
        match self.stack.last_mut() {
            Some(Frame::Node { node: parent, .. }) => parent.children.push(child),
            Some(Frame::Skip { .. }) => {}
            Some(Frame::Wrapper { .. }) | None => self.root().children.push(child),
        }
    }

    fn finish(self) -> Result<Parsed, X3dError> {
        if let Some(open) = self.stack.last() {
            return Err(X3dError::MalformedMarkup(format!(
                "unclosed element <{}>",
                open.name()
            )));
        }
        if !self.saw_element {
            return Err(X3dError::MalformedMarkup("no root element".into()));
        }
        Ok(Parsed {
            document: Document {
                root: self.root.unwrap_or_else(|| Node::new(NodeKind::Scene)),
                routes: self.routes,
            },
            diagnostics: self.diagnostics,
        })
    }

    fn route(&mut self, attrs: &[(String, String)]) {
        let get = |key: &str| attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
        match (
            get("fromNode"),
            get("fromField"),
            get("toNode"),
            get("toField"),
        ) {
            (Some(from_node), Some(from_field), Some(to_node), Some(to_field)) => {
                self.routes.push(Route {
                    from_node,
                    from_field,
                    to_node,
                    to_field,
                })
            }
            _ => self.diagnostics.push(Diagnostic::new(
                DiagnosticKind::DanglingRoute,
                "ROUTE is missing one of fromNode/fromField/toNode/toField",
            )),
        }
    }

    fn build_node(
        &mut self,
        kind: NodeKind,
        attrs: &[(String, String)],
    ) -> Result<(Node, Option<String>), X3dError> {
        let mut node = Node::new(kind);
        let mut container = None;
        for (key, value) in attrs {
            match key.as_str() {
                "DEF" => node.def = Some(value.clone()),
                "containerField" => container = Some(value.clone()),
                "USE" => self.diagnostics.push(Diagnostic::new(
                    DiagnosticKind::UnsupportedAttribute,
                    format!(
                        "{kind}: USE=\"{value}\" is not supported, node kept as a fresh instance"
                    ),
                )),
                _ => match kind.field_spec(key) {
                    Some(spec) => {
                        let label = node_label(kind, node.def.as_deref());
                        let parsed = parse_field(&label, spec, value)?;
                        if let Some(d) = parsed.diagnostic {
                            self.diagnostics.push(d);
                        }
                        node.set_field(spec.name, parsed.value)?;
                    }
                    None => self.diagnostics.push(Diagnostic::new(
                        DiagnosticKind::UnknownField,
                        format!("{kind} has no field {key}, attribute ignored"),
                    )),
                },
            }
        }
        Ok((node, container))
    }
}

fn attributes(e: &BytesStart<'_>) -> Result<Vec<(String, String)>, X3dError> {
    let mut out = Vec::new();
    for attr in e.attributes() {
        let attr = attr.map_err(|err| X3dError::MalformedMarkup(err.to_string()))?;
        let key = <str>::to_owned(attr.key.as_ref());
        let value = attr
            .normalized_value(XmlVersion::default())
            .map_err(|err| X3dError::MalformedMarkup(err.to_string()))?
            .into_owned();
        out.push((key, value));
    }
    Ok(out)
}

fn node_label(kind: NodeKind, def: Option<&str>) -> String {
    match def {
        Some(def) => format!("{kind}[{def}]"),
        None => kind.to_string(),
    }
}

struct ParsedField {
    value: FieldValue,
    diagnostic: Option<Diagnostic>,
}

fn parse_field(label: &str, spec: &FieldSpec, raw: &str) -> Result<ParsedField, X3dError> {
    if spec.ty == FieldType::SFString {
        return Ok(ParsedField {
            value: FieldValue::SFString(raw.to_string()),
            diagnostic: None,
        });
    }

    let mut numbers = raw
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|token| {
            token
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| X3dError::FieldTypeError {
                    node: label.to_string(),
                    field: spec.name.to_string(),
                    value: token.to_string(),
                    expected: spec.ty,
                })
        })
        .collect::<Result<Vec<f64>, _>>()?;

    let mut diagnostic = None;
    if let Some(expected) = spec.ty.arity() {
        let found = numbers.len();
        let is_matrix = matches!(spec.ty, FieldType::SFMatrix3f | FieldType::SFMatrix4f);
        if is_matrix && found > 0 && found < expected {
            // Short matrices are completed from the default's trailing entries.
            let defaults = spec.default_value().components();
            numbers.extend_from_slice(&defaults[found..]);
            diagnostic = Some(Diagnostic::new(
                DiagnosticKind::BadFieldCount,
                format!(
                    "{label}.{}: expected {expected} values, found {found}; padded with defaults {:?}",
                    spec.name,
                    &defaults[found..]
                ),
            ));
        } else if found != expected {
            return Err(X3dError::BadFieldCount {
                node: label.to_string(),
                field: spec.name.to_string(),
                expected,
                found,
            });
        }
    }

    let value = match spec.ty {
        FieldType::SFFloat => FieldValue::SFFloat(numbers[0]),
        FieldType::SFVec3f => FieldValue::SFVec3f([numbers[0], numbers[1], numbers[2]]),
        FieldType::SFColor => FieldValue::SFColor([numbers[0], numbers[1], numbers[2]]),
        FieldType::SFRotation => FieldValue::SFRotation(
            Rotation::new([numbers[0], numbers[1], numbers[2]], numbers[3]).ok_or_else(|| {
                X3dError::ZeroRotationAxis {
                    node: label.to_string(),
                    field: spec.name.to_string(),
                }
            })?,
        ),
        FieldType::SFMatrix3f => FieldValue::SFMatrix3f(numbers.try_into().expect("arity checked")),
        FieldType::SFMatrix4f => FieldValue::SFMatrix4f(numbers.try_into().expect("arity checked")),
        FieldType::MFFloat => FieldValue::MFFloat(numbers),
        FieldType::SFString => unreachable!(),
    };
    Ok(ParsedField { value, diagnostic })
}
