mod common;

use common::{fixture, read_fixture};
use webhaptics::linac::{
    check_collision, list_attachments, load_attachment, pair_distances, parse_linac_scene,
    LinacConfiguration, LinacError, LinacGeometry,
};
use webhaptics::x3d::parse_x3d;

fn scene() -> webhaptics::x3d::Document {
    parse_linac_scene(&read_fixture("x3d/linac.x3d")).unwrap()
}

#[test]
fn registry_lists_sorted_stems() {
    assert_eq!(
        list_attachments(&fixture("attachments")).unwrap(),
        ["cone", "wedge"]
    );
}

#[test]
fn empty_and_missing_directories() {
    let dir = tempfile::tempdir().unwrap();
    assert!(list_attachments(dir.path()).unwrap().is_empty());
    let gone = dir.path().join("nope");
    assert!(matches!(
        list_attachments(&gone),
        Err(LinacError::DirectoryUnreadable { .. })
    ));
}

#[test]
fn registry_reads_through_on_every_call() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("b.x3d"), "<Scene/>").unwrap();
    std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
    std::fs::create_dir(dir.path().join("sub.x3d")).unwrap();
    assert_eq!(list_attachments(dir.path()).unwrap(), ["b"]);
    std::fs::write(dir.path().join("a.x3d"), "<Scene/>").unwrap();
    assert_eq!(list_attachments(dir.path()).unwrap(), ["a", "b"]);
    std::fs::remove_file(dir.path().join("b.x3d")).unwrap();
    assert_eq!(list_attachments(dir.path()).unwrap(), ["a"]);
}

#[test]
fn loading_cone_grafts_nodes_and_solids() {
    let doc = scene();
    let geo = LinacGeometry::reference();
    let dir = fixture("attachments");
    let cone = parse_x3d(&read_fixture("attachments/cone.x3d"))
        .unwrap()
        .document;

    let one = load_attachment(&doc, &geo, &dir, "cone").unwrap();
    assert!(one.diagnostics.is_empty(), "{:?}", one.diagnostics);
    assert_eq!(
        one.document.node_count(),
        doc.node_count() + cone.node_count()
    );
    assert_eq!(one.geometry.attachments.len(), 3);
    assert!(one.document.find_def("CONE_cone1").is_some());
    // Grafted under the collimator frame.
    let path = one.document.find_def("CONE_cone1").unwrap();
    let parent = path.parent().unwrap();
    assert_eq!(
        one.document.node(&parent).unwrap().def.as_deref(),
        Some("COLLIMATOR")
    );

    let two = load_attachment(&one.document, &one.geometry, &dir, "cone").unwrap();
    assert_eq!(
        two.document.node_count(),
        doc.node_count() + 2 * cone.node_count()
    );
    assert_eq!(two.geometry.attachments.len(), 6);
    assert!(two.document.find_def("CONE_cone2").is_some());
    let mut names: Vec<_> = two
        .geometry
        .attachments
        .iter()
        .map(|p| p.name.clone())
        .collect();
    names.dedup();
    assert_eq!(names.len(), 6);
}

#[test]
fn cone_narrows_patient_clearance() {
    let doc = scene();
    let geo = LinacGeometry::reference();
    let cfg = LinacConfiguration::default();
    let loaded = load_attachment(&doc, &geo, &fixture("attachments"), "cone").unwrap();
    let min = |g: &LinacGeometry| {
        pair_distances(&cfg, g)
            .iter()
            .map(|p| p.distance)
            .fold(f64::INFINITY, f64::min)
    };
    assert!((min(&geo) - 0.18).abs() < 1e-9);
    assert!(
        (min(&loaded.geometry) - 0.09).abs() < 1e-6,
        "{}",
        min(&loaded.geometry)
    );
    assert!(!check_collision(&cfg, &loaded.geometry, 0.0).colliding);
    assert!(check_collision(&cfg, &loaded.geometry, 0.1).colliding);
    assert!(!check_collision(&cfg, &geo, 0.1).colliding);
}

#[test]
fn unknown_attachment_is_not_found() {
    let err = load_attachment(
        &scene(),
        &LinacGeometry::reference(),
        &fixture("attachments"),
        "tray",
    )
    .unwrap_err();
    assert!(matches!(err, LinacError::NotFound(n) if n == "tray"));
}

#[test]
fn scene_without_collimator_is_rejected() {
    assert!(matches!(
        parse_linac_scene("<Scene><Transform DEF='GANTRY'/></Scene>"),
        Err(LinacError::MissingFrame(_))
    ));
}
