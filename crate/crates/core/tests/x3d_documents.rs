// 1.570796 below is the fixtures' literal rotation angle, not an approximation of pi/2.
#![allow(clippy::approx_constant)]

mod common;

use std::collections::BTreeSet;

use common::{corpus, read_fixture};
use webhaptics::x3d::{
    parse_x3d, parse_x3d_bytes, serialize_x3d, validate, DiagnosticKind, Document, FieldValue,
    Node, NodeKind, NodePath, Route, X3dError,
};

fn find(doc: &Document, kind: NodeKind) -> Vec<&Node> {
    doc.root
        .walk()
        .into_iter()
        .filter(|(_, n)| n.kind == kind)
        .map(|(_, n)| n)
        .collect()
}

#[test]
fn stylus_listing_fields() {
    let parsed = parse_x3d(&read_fixture("x3d/device_stylus.x3d")).unwrap();
    assert!(parsed.diagnostics.is_empty(), "{:?}", parsed.diagnostics);
    let doc = parsed.document;

    let device = find(&doc, NodeKind::HLHapticsDevice)[0];
    assert_eq!(
        device.field("positionCalibration"),
        Some(&FieldValue::SFMatrix4f([
            1e-3, 0.0, 0.0, -0.15, //
            0.0, 2e-3, 0.0, 0.05, //
            0.0, 0.0, 1e-3, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ]))
    );
    let stylus = &device.children[0];
    assert_eq!(stylus.container_field, "stylus");
    assert_eq!(stylus.node.kind, NodeKind::Group);

    assert_eq!(
        find(&doc, NodeKind::Sphere)[0].float("radius"),
        Some(0.0025)
    );
    let cyl = find(&doc, NodeKind::Cylinder)[0];
    assert_eq!(cyl.float("radius"), Some(0.005));
    assert_eq!(cyl.float("height"), Some(0.1));

    let t = find(&doc, NodeKind::Transform)[0];
    assert_eq!(t.vec3("translation"), Some([0.0, 0.0, 0.08]));
    let r = t.field("rotation").unwrap().as_rotation().unwrap();
    assert_eq!(r.axis(), [1.0, 0.0, 0.0]);
    assert_eq!(r.angle(), 1.570796);
}

#[test]
fn dynamic_listing_fields() {
    let parsed = parse_x3d(&read_fixture("x3d/dynamic_cylinder.x3d")).unwrap();
    let kinds: Vec<_> = parsed.diagnostics.iter().map(|d| d.kind).collect();
    assert_eq!(kinds, [DiagnosticKind::BadFieldCount]);
    let doc = parsed.document;

    let body = find(&doc, NodeKind::DynamicTransform)[0];
    assert_eq!(body.def.as_deref(), Some("DYN1"));
    assert_eq!(body.float("mass"), Some(0.05));
    assert_eq!(
        body.field("inertiaTensor"),
        Some(&FieldValue::SFMatrix3f([
            0.1, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.1, 0.1
        ]))
    );
    let surface = find(&doc, NodeKind::FrictionalSurface)[0];
    assert_eq!(surface.float("dynamicFriction"), Some(0.6));
    assert_eq!(surface.float("staticFriction"), Some(0.2));
    let material = find(&doc, NodeKind::Material)[0];
    assert_eq!(
        material.field("diffuseColor"),
        Some(&FieldValue::SFColor([0.0, 0.8, 0.8]))
    );
    let cyl = find(&doc, NodeKind::Cylinder)[0];
    assert_eq!(cyl.def.as_deref(), Some("LEFTCYL"));
    assert_eq!(cyl.float("height"), Some(0.085));
    assert_eq!(cyl.float("radius"), Some(0.045));

    // Validation adds nothing beyond the arity note.
    assert!(validate(&doc).is_empty());

    let again = parse_x3d(&serialize_x3d(&doc)).unwrap();
    assert!(again.diagnostics.is_empty());
    assert_eq!(
        find(&again.document, NodeKind::DynamicTransform)[0].float("mass"),
        Some(0.05)
    );
    let s = find(&again.document, NodeKind::FrictionalSurface)[0];
    assert_eq!(s.float("dynamicFriction"), Some(0.6));
    assert_eq!(s.float("staticFriction"), Some(0.2));
}

#[test]
fn canonical_inertia_fixture_is_clean() {
    let parsed = parse_x3d(&read_fixture("x3d/dynamic_cylinder_canonical.x3d")).unwrap();
    assert!(parsed.diagnostics.is_empty());
    let body = find(&parsed.document, NodeKind::DynamicTransform)[0];
    assert_eq!(
        body.field("inertiaTensor"),
        Some(&FieldValue::SFMatrix3f([
            0.1, 0.0, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.1
        ]))
    );
}

#[test]
fn empty_scene() {
    let doc = parse_x3d("<Scene/>").unwrap().document;
    assert_eq!(doc.node_count(), 0);
    assert!(doc.routes.is_empty());
    assert_eq!(serialize_x3d(&doc).trim(), "<Scene/>");
}

#[test]
fn corpus_round_trip_is_a_fixed_point() {
    let files = corpus();
    assert!(files.len() >= 20, "{}", files.len());
    for (name, text) in files {
        let first = parse_x3d(&text)
            .unwrap_or_else(|e| panic!("{name}: {e}"))
            .document;
        let written = serialize_x3d(&first);
        let second = parse_x3d(&written).unwrap().document;
        assert_eq!(first, second, "{name}");
        assert_eq!(serialize_x3d(&second), written, "{name}");
    }
}

#[test]
fn every_node_carries_every_legal_field() {
    for (name, text) in corpus() {
        let doc = parse_x3d(&text).unwrap().document;
        for (path, node) in doc.root.walk() {
            let legal: BTreeSet<&str> = node.kind.field_specs().iter().map(|s| s.name).collect();
            let present: BTreeSet<&str> = node.fields().map(|(n, _)| n).collect();
            assert_eq!(present, legal, "{name} at {path}");
            for spec in node.kind.field_specs() {
                assert_eq!(
                    node.field(spec.name).unwrap().field_type(),
                    spec.ty,
                    "{name} {}",
                    spec.name
                );
            }
        }
    }
}

#[test]
fn corpus_validates_except_known_cases() {
    for (name, text) in corpus() {
        let doc = parse_x3d(&text).unwrap().document;
        let diags = validate(&doc);
        assert!(diags.is_empty(), "{name}: {diags:?}");
    }
}

#[test]
fn negative_radius_gives_one_diagnostic() {
    let doc = parse_x3d("<Scene><Shape><Sphere radius='-1'/></Shape></Scene>")
        .unwrap()
        .document;
    let kinds: Vec<_> = validate(&doc).into_iter().map(|d| d.kind).collect();
    assert_eq!(kinds, [DiagnosticKind::NonPositiveDimension]);
}

#[test]
fn route_to_missing_node_gives_one_diagnostic() {
    let text = r#"<Scene>
  <Transform DEF="A"/>
  <Transform DEF="B"/>
  <ROUTE fromNode="A" fromField="translation" toNode="B" toField="translation"/>
  <ROUTE fromNode="A" fromField="translation" toNode="GHOST" toField="translation"/>
</Scene>"#;
    let doc = parse_x3d(text).unwrap().document;
    let kinds: Vec<_> = validate(&doc).into_iter().map(|d| d.kind).collect();
    assert_eq!(kinds, [DiagnosticKind::DanglingRoute]);
}

#[test]
fn duplicate_def_and_bad_container() {
    let text = r#"<Scene>
  <Group DEF="X"/>
  <Group DEF="X"/>
  <Shape><Sphere containerField="appearance"/></Shape>
</Scene>"#;
    let doc = parse_x3d(text).unwrap().document;
    let mut kinds: Vec<_> = validate(&doc).into_iter().map(|d| d.kind).collect();
    kinds.sort_by_key(|k| format!("{k:?}"));
    assert_eq!(
        kinds,
        [
            DiagnosticKind::DuplicateDef,
            DiagnosticKind::IllegalContainerField
        ]
    );
}

#[test]
fn parse_errors() {
    assert_eq!(
        parse_x3d("#VRML V2.0 utf8\nShape {}"),
        Err(X3dError::ClassicVrml)
    );
    assert!(matches!(
        parse_x3d("<Scene><Group></Scene>"),
        Err(X3dError::MalformedMarkup(_))
    ));
    assert!(matches!(
        parse_x3d("<Scene><Shape><Sphere radius='big'/></Shape></Scene>"),
        Err(X3dError::FieldTypeError { .. })
    ));
    assert!(matches!(
        parse_x3d("<Scene><Transform translation='1 2'/></Scene>"),
        Err(X3dError::BadFieldCount {
            expected: 3,
            found: 2,
            ..
        })
    ));
    assert!(matches!(
        parse_x3d("<Scene><Transform rotation='0 0 0 1'/></Scene>"),
        Err(X3dError::ZeroRotationAxis { .. })
    ));
    assert_eq!(
        parse_x3d_bytes(&[0x3c, 0xff, 0xfe]),
        Err(X3dError::InvalidUtf8)
    );
}

#[test]
fn leading_dot_literals() {
    let doc = parse_x3d("<Scene><Shape><Cylinder radius='.045' height='-.5e-1'/></Shape></Scene>")
        .unwrap()
        .document;
    let cyl = find(&doc, NodeKind::Cylinder)[0];
    assert_eq!(cyl.float("radius"), Some(0.045));
    assert_eq!(cyl.float("height"), Some(-0.05));
}

mod properties {
    use super::*;
    use proptest::prelude::*;
    use webhaptics::x3d::Rotation;

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            -1e3f64..1e3,
            proptest::num::f64::NORMAL,
            proptest::num::f64::SUBNORMAL,
            Just(0.0),
            Just(-0.0),
        ]
    }

    fn rotation() -> impl Strategy<Value = Rotation> {
        ([finite(), finite(), finite()], finite())
            .prop_filter_map("zero axis", |(a, t)| Rotation::new(a, t))
    }

    fn geometry() -> impl Strategy<Value = Node> {
        prop_oneof![
            finite().prop_map(
                |r| Node::new(NodeKind::Sphere).with_field("radius", FieldValue::SFFloat(r))
            ),
            (finite(), finite()).prop_map(|(r, h)| Node::new(NodeKind::Cylinder)
                .with_field("radius", FieldValue::SFFloat(r))
                .with_field("height", FieldValue::SFFloat(h))),
            [finite(), finite(), finite()]
                .prop_map(|s| Node::new(NodeKind::Box).with_field("size", FieldValue::SFVec3f(s))),
        ]
    }

    fn shape() -> impl Strategy<Value = Node> {
        (
            geometry(),
            proptest::option::of(([finite(), finite(), finite()], finite(), finite())),
        )
            .prop_map(|(g, look)| {
                let mut shape = Node::new(NodeKind::Shape);
                if let Some((color, friction, shine)) = look {
                    let appearance = Node::new(NodeKind::Appearance)
                        .with_child(
                            Node::new(NodeKind::Material)
                                .with_field("diffuseColor", FieldValue::SFColor(color))
                                .with_field("shininess", FieldValue::SFFloat(shine)),
                        )
                        .with_child(
                            Node::new(NodeKind::FrictionalSurface)
                                .with_field("dynamicFriction", FieldValue::SFFloat(friction)),
                        );
                    shape.push_child(appearance);
                }
                shape.push_child(g);
                shape
            })
    }

    fn tree() -> impl Strategy<Value = Node> {
        shape().prop_recursive(4, 24, 4, |inner| {
            (
                0..3usize,
                [finite(), finite(), finite()],
                rotation(),
                finite(),
                proptest::collection::vec(inner, 0..4),
            )
                .prop_map(|(kind, t, r, m, children)| {
                    let mut node = match kind {
                        0 => Node::new(NodeKind::Group),
                        1 => Node::new(NodeKind::Transform)
                            .with_field("translation", FieldValue::SFVec3f(t))
                            .with_field("rotation", FieldValue::SFRotation(r)),
                        _ => Node::new(NodeKind::DynamicTransform)
                            .with_field("translation", FieldValue::SFVec3f(t))
                            .with_field("mass", FieldValue::SFFloat(m)),
                    };
                    for c in children {
                        node.push_child(c);
                    }
                    node
                })
        })
    }

    fn document() -> impl Strategy<Value = Document> {
        (
            proptest::collection::vec(tree(), 0..4),
            "[A-Za-z0-9 &<>\"'./_-]{0,12}",
            proptest::collection::vec(("[A-Z]{1,4}", "[a-z]{1,8}"), 0..3),
        )
            .prop_map(|(children, device_name, routes)| {
                let mut root = Node::new(NodeKind::Scene);
                for c in children {
                    root.push_child(c);
                }
                root.push_child(
                    Node::new(NodeKind::Inline)
                        .with_field("url", FieldValue::SFString(device_name)),
                );
                let mut doc = Document::new(root);
                // Unique DEF names by position.
                let paths: Vec<NodePath> = doc
                    .root
                    .walk()
                    .into_iter()
                    .skip(1)
                    .map(|(p, _)| p)
                    .collect();
                for (i, p) in paths.iter().enumerate().filter(|(i, _)| i % 3 == 0) {
                    doc.node_mut(p).unwrap().def = Some(format!("N{i}"));
                }
                doc.routes = routes
                    .into_iter()
                    .map(|(node, field)| Route {
                        from_node: node.clone(),
                        from_field: field.clone(),
                        to_node: node,
                        to_field: field,
                    })
                    .collect();
                doc
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn random_documents_round_trip(doc in document()) {
            let text = serialize_x3d(&doc);
            let back = parse_x3d(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
            prop_assert!(back.diagnostics.is_empty(), "{:?}", back.diagnostics);
            prop_assert_eq!(&back.document, &doc, "{}", text);
        }

        #[test]
        fn rotation_normalization_is_idempotent(r in rotation()) {
            let again = Rotation::new(r.axis(), r.angle()).unwrap();
            prop_assert_eq!(again, r);
            let [x, y, z] = r.axis();
            prop_assert!(((x * x + y * y + z * z).sqrt() - 1.0).abs() <= 4.0 * f64::EPSILON);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
            let _ = parse_x3d_bytes(&bytes);
        }

        #[test]
        fn markup_soup_never_panics(parts in proptest::collection::vec(prop_oneof![
            Just("<Scene>".to_string()), Just("</Scene>".to_string()), Just("<X3D>".to_string()),
            Just("<Transform translation='1 2 3'>".to_string()), Just("</Transform>".to_string()),
            Just("<Shape>".to_string()), Just("</Shape>".to_string()), Just("<Sphere/>".to_string()),
            Just("<Cylinder radius='.5' height='x'/>".to_string()), Just("<ROUTE fromNode='A'/>".to_string()),
            Just("<DynamicTransform inertiaTensor='1 2 3'/>".to_string()), Just("<Foo bar='1'/>".to_string()),
            Just("<Group containerField='stylus'>".to_string()), Just("</Group>".to_string()),
            "[ -~]{0,8}",
        ], 0..24)) {
            let text = parts.concat();
            if let Ok(parsed) = parse_x3d(&text) {
                let _ = validate(&parsed.document);
                let again = parse_x3d(&serialize_x3d(&parsed.document));
                prop_assert!(again.is_ok());
            }
        }
    }
}
