mod common;

use common::{fixture, read_fixture};
use webhaptics::linac::Axis;
use webhaptics::sim::{
    parse_command, primitive_list, Command, CommandError, ElectrolysisAction, HydraulicsAction,
    SimConfig, Simulation, StateSnapshot, LINAC_SCENE,
};
use webhaptics::x3d::{parse_x3d, FieldValue};

fn linac_sim() -> Simulation {
    let mut sim =
        Simulation::new(SimConfig::default()).with_attachments_dir(fixture("attachments"));
    sim.add_scene(
        LINAC_SCENE,
        parse_x3d(&read_fixture("x3d/linac.x3d")).unwrap().document,
    );
    sim
}

/// Everything but the diagnostics log.
fn state(s: &StateSnapshot) -> StateSnapshot {
    StateSnapshot {
        diagnostics: Vec::new(),
        ..s.clone()
    }
}

#[test]
fn gantry_command_shows_in_next_snapshot() {
    let mut sim = linac_sim();
    let c =
        parse_command(r#"{"target":"linac_axis","axis":"gantry","value":190,"client_tick":12}"#)
            .unwrap();
    assert_eq!(c.client_tick, 12);
    sim.apply(&c.command).unwrap();
    sim.step();
    let snap = sim.snapshot();
    assert_eq!(snap.linac.config.gantry_deg, 190.0);
    assert_eq!(snap.tick, 1);
    assert!(snap.diagnostics.is_empty());
}

#[test]
fn malformed_commands_leave_state_unchanged() {
    let mut sim = linac_sim();
    for _ in 0..5 {
        sim.step();
    }
    let before = sim.snapshot();
    let bad = [
        r#"{"target":"linac_axis","axis":"gantry","value":"high"}"#,
        r#"{"target":"linac_axis","axis":"elbow","value":1}"#,
        r#"{"target":"linac_axis","axis":"gantry"}"#,
        r#"{"target":"hydraulics","action":"set_areas","area_in":0,"area_out":1}"#,
        r#"{"target":"hydraulics","action":"push","displacement":1,"extra":true}"#,
        r#"{"target":"electrolysis","action":"speed","value":-2}"#,
        r#"{"target":"attachment","name":"../etc/passwd"}"#,
        r#"{"target":"scene_field","scene":"linac","node":"GANTRY","field":"","value":{"type":"SFFloat","value":1}}"#,
        r#"{"target":7}"#,
        r#"[1,2]"#,
        "not json",
    ];
    for json in bad {
        assert!(
            matches!(parse_command(json), Err(CommandError::ValidationFailed(_))),
            "{json}"
        );
    }
    assert_eq!(
        parse_command(r#"{"target":"teleport"}"#),
        Err(CommandError::UnknownTarget("teleport".into()))
    );
    assert_eq!(sim.snapshot(), before);

    // Commands that pass the schema but fail against live state.
    let rejected = [
        Command::LinacAxis {
            axis: Axis::Gantry,
            value: f64::NAN,
        },
        Command::Hydraulics(HydraulicsAction::Push { displacement: 0.5 }),
        Command::Attachment {
            name: "tray".into(),
        },
        Command::SceneField {
            scene: LINAC_SCENE.into(),
            node: "NOPE".into(),
            field: "rotation".into(),
            value: FieldValue::SFFloat(1.0),
        },
        Command::SceneField {
            scene: "missing".into(),
            node: "GANTRY".into(),
            field: "rotation".into(),
            value: FieldValue::SFFloat(1.0),
        },
    ];
    for c in &rejected {
        assert!(sim.apply(c).is_err(), "{c:?}");
    }
    let after = sim.snapshot();
    assert_eq!(state(&after), state(&before));
    assert_eq!(after.diagnostics.len(), rejected.len());
    assert_eq!(
        sim.scene(LINAC_SCENE),
        Some(&parse_x3d(&read_fixture("x3d/linac.x3d")).unwrap().document)
    );
}

#[test]
fn conflicting_writes_apply_in_arrival_order() {
    let mut sim = linac_sim();
    let queue = [
        r#"{"target":"linac_axis","axis":"gantry","value":90}"#,
        r#"{"target":"linac_axis","axis":"gantry","value":190}"#,
        r#"{"target":"hydraulics","action":"set_load","mass":5}"#,
        r#"{"target":"hydraulics","action":"set_load","mass":2}"#,
        r#"{"target":"electrolysis","action":"power","on":true}"#,
        r#"{"target":"electrolysis","action":"power","on":false}"#,
    ];
    for json in queue {
        sim.apply(&parse_command(json).unwrap().command).unwrap();
    }
    sim.step();
    let snap = sim.snapshot();
    assert_eq!(snap.linac.config.gantry_deg, 190.0);
    assert_eq!(snap.hydraulics.system.load_mass, 2.0);
    assert!(!snap.electrolysis.powered);
}

#[test]
fn scene_field_updates_bump_revision() {
    let mut sim = linac_sim();
    assert_eq!(sim.snapshot().scene_revisions[LINAC_SCENE], 0);
    let c = parse_command(
        r#"{"target":"scene_field","scene":"linac","node":"COUCH","field":"translation",
            "value":{"type":"SFVec3f","value":[0,0,-0.2]}}"#,
    )
    .unwrap();
    sim.apply(&c.command).unwrap();
    assert_eq!(sim.snapshot().scene_revisions[LINAC_SCENE], 1);
    let doc = sim.scene(LINAC_SCENE).unwrap();
    let node = doc.node(&doc.find_def("COUCH").unwrap()).unwrap();
    assert_eq!(node.vec3("translation"), Some([0.0, 0.0, -0.2]));
}

#[test]
fn attachment_command_grafts_into_scene() {
    let mut sim = linac_sim();
    let shapes = primitive_list(sim.scene(LINAC_SCENE).unwrap()).len();
    sim.apply(&Command::Attachment {
        name: "cone".into(),
    })
    .unwrap();
    let snap = sim.snapshot();
    assert_eq!(snap.linac.attachments, ["cone"]);
    assert_eq!(snap.scene_revisions[LINAC_SCENE], 1);
    assert!(primitive_list(sim.scene(LINAC_SCENE).unwrap()).len() > shapes);
    assert!(sim
        .scene(LINAC_SCENE)
        .unwrap()
        .find_def("CONE_cone1")
        .is_some());
}

#[test]
fn idle_sim_ticks_and_publishes_on_schedule() {
    let mut sim = Simulation::new(SimConfig::default());
    let mut published = Vec::new();
    for _ in 0..3000 {
        sim.step();
        if sim.config.publish_due(sim.tick()) {
            published.push(sim.snapshot().tick);
        }
    }
    assert_eq!(published.len(), 90);
    for w in published.windows(2) {
        assert!(w[1] > w[0]);
        assert!((33..=34).contains(&(w[1] - w[0])), "{w:?}");
    }
    let other = SimConfig {
        tick_hz: 500,
        publish_hz: 60,
        ..SimConfig::default()
    };
    let due = (1..=500u64).filter(|t| other.publish_due(*t)).count();
    assert_eq!(due, 60);
}

#[test]
fn snapshots_are_self_contained_json() {
    let mut sim = linac_sim();
    sim.apply(&Command::Electrolysis(ElectrolysisAction::Power {
        on: true,
    }))
    .unwrap();
    for _ in 0..50 {
        sim.step();
    }
    let snap = sim.snapshot();
    let text = serde_json::to_string(&snap).unwrap();
    let back: StateSnapshot = serde_json::from_str(&text).unwrap();
    assert_eq!(back, snap);
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in [
        "tick",
        "linac",
        "electrolysis",
        "hydraulics",
        "scene_revisions",
        "diagnostics",
    ] {
        assert!(value.get(key).is_some(), "{key}");
    }
    assert_eq!(
        value["linac"]["collision"]["colliding"],
        serde_json::Value::Bool(false)
    );
}

#[test]
fn same_seed_same_commands_same_snapshots() {
    let run = || {
        let mut sim = Simulation::new(SimConfig {
            seed: 9,
            ..SimConfig::default()
        });
        let mut out = Vec::new();
        for k in 0..4000u64 {
            if k == 10 {
                sim.apply(&Command::Electrolysis(ElectrolysisAction::Power {
                    on: true,
                }))
                .unwrap();
            }
            if k == 900 {
                sim.apply(&Command::Electrolysis(ElectrolysisAction::Speed {
                    value: 2.0,
                }))
                .unwrap();
            }
            sim.step();
            if sim.config.publish_due(sim.tick()) {
                out.push(serde_json::to_string(&sim.snapshot()).unwrap());
            }
        }
        out
    };
    assert_eq!(run(), run());
}

#[test]
fn linac_scene_primitives() {
    let doc = parse_x3d(&read_fixture("x3d/linac.x3d")).unwrap().document;
    let list = primitive_list(&doc);
    let defs: Vec<_> = list.iter().filter_map(|p| p.def.as_deref()).collect();
    for def in ["HEAD", "COLLIMATOR_BODY", "COUCH_TOP", "PATIENT"] {
        assert!(defs.contains(&def), "{def}");
    }
    for p in &list {
        assert_eq!(&p.transform[12..], &[0.0, 0.0, 0.0, 1.0]);
    }
}
