//! Fixed-tick simulation that owns every piece of mutable state, plus the
//! command and snapshot types that cross the wire.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::electrolysis::{
    census, init_electrolysis, step_electrolysis, Census, ElectrolysisState, Particle,
};
use crate::geometry::Shape;
use crate::haptics::HapticDeviceConfig;
use crate::hydraulics::{
    haptic_resistance, lift_step, pressure, transmit_force, HydraulicModule, HydraulicSystem,
    Resistance, STANDARD_GRAVITY,
};
use crate::linac::{
    check_collision, load_attachment, set_axis, Axis, CollisionReport, LinacConfiguration,
    LinacGeometry,
};
use crate::scene::{apply_update, matrix_to_row_major, path_transform, FieldUpdate, NodeRef};
use crate::x3d::{Document, FieldValue, NodeKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CommandError {
    #[error("unknown command target {0:?}")]
    UnknownTarget(String),
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("command rejected: {0}")]
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElectrolysisAction {
    Power { on: bool },
    Speed { value: f64 },
    Reset { molecules: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum HydraulicsAction {
    /// Move the input piston by `displacement` metres.
    Push {
        displacement: f64,
    },
    SetLoad {
        mass: f64,
    },
    SetModule {
        module: HydraulicModule,
    },
    SetAreas {
        area_in: f64,
        area_out: f64,
    },
    /// Input-piston force for the pressure readout, newtons.
    SetInputForce {
        force: f64,
    },
}

pub const COMMAND_TARGETS: [&str; 5] = [
    "linac_axis",
    "electrolysis",
    "hydraulics",
    "scene_field",
    "attachment",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum Command {
    LinacAxis {
        axis: Axis,
        value: f64,
    },
    Electrolysis(ElectrolysisAction),
    Hydraulics(HydraulicsAction),
    SceneField {
        scene: String,
        node: NodeRef,
        field: String,
        value: FieldValue,
    },
    Attachment {
        name: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEnvelope {
    #[serde(flatten)]
    pub command: Command,
    #[serde(default)]
    pub client_tick: u64,
}

impl Command {
    /// Schema checks that need no simulation state.
    pub fn validate(&self) -> Result<(), CommandError> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(CommandError::ValidationFailed(format!(
                    "{name} must be finite"
                )))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CommandError::ValidationFailed(format!(
                    "{name} must be positive"
                )))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CommandError::ValidationFailed(format!(
                    "{name} must be non-negative"
                )))
            }
        };
        match self {
            Command::LinacAxis { value, .. } => finite("value", *value),
            Command::Electrolysis(ElectrolysisAction::Speed { value }) => {
                non_negative("value", *value)
            }
            Command::Electrolysis(_) => Ok(()),
            Command::Hydraulics(HydraulicsAction::Push { displacement }) => {
                finite("displacement", *displacement)
            }
            Command::Hydraulics(HydraulicsAction::SetLoad { mass }) => non_negative("mass", *mass),
            Command::Hydraulics(HydraulicsAction::SetAreas { area_in, area_out }) => {
                positive("area_in", *area_in)?;
                positive("area_out", *area_out)
            }
            Command::Hydraulics(HydraulicsAction::SetInputForce { force }) => {
                finite("force", *force)
            }
            Command::Hydraulics(HydraulicsAction::SetModule { .. }) => Ok(()),
            Command::SceneField { field, value, .. } => {
                if field.is_empty() {
                    return Err(CommandError::ValidationFailed(
                        "field must not be empty".into(),
                    ));
                }
                if value.components().iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(CommandError::ValidationFailed(
                        "value must be finite".into(),
                    ))
                }
            }
            Command::Attachment { name } => {
                let ok = !name.is_empty()
                    && name
                        .chars()
                        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
                    && !name.starts_with('.');
                if ok {
                    Ok(())
                } else {
                    Err(CommandError::ValidationFailed(format!(
                        "bad attachment name {name:?}"
                    )))
                }
            }
        }
    }
}

/// Decodes and validates a JSON command.
pub fn parse_command(json: &str) -> Result<CommandEnvelope, CommandError> {
    let value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| CommandError::ValidationFailed(e.to_string()))?;
    let target = value
        .get("target")
        .ok_or_else(|| CommandError::ValidationFailed("missing field `target`".into()))?;
    let target = target
        .as_str()
        .ok_or_else(|| CommandError::ValidationFailed("`target` must be a string".into()))?;
    if !COMMAND_TARGETS.contains(&target) {
        return Err(CommandError::UnknownTarget(target.to_string()));
    }
    let envelope: CommandEnvelope =
        serde_json::from_value(value).map_err(|e| CommandError::ValidationFailed(e.to_string()))?;
    envelope.command.validate()?;
    Ok(envelope)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub tick_hz: u32,
    pub publish_hz: u32,
    pub seed: u64,
    pub electrolysis_molecules: usize,
    pub gravity: f64,
    /// Linac collision clearance, metres.
    pub clearance: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tick_hz: 1000,
            publish_hz: 30,
            seed: 0,
            electrolysis_molecules: 10,
            gravity: STANDARD_GRAVITY,
            clearance: 0.0,
        }
    }
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.tick_hz as f64
    }

    /// Whether a snapshot is due after `tick`: true each time
    /// `tick · publish_hz / tick_hz` crosses an integer.
    pub fn publish_due(&self, tick: u64) -> bool {
        if tick == 0 {
            return false;
        }
        let (p, h) = (self.publish_hz as u64, self.tick_hz as u64);
        tick * p / h > (tick - 1) * p / h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinacSnapshot {
    pub config: LinacConfiguration,
    pub attachments: Vec<String>,
    pub collision: CollisionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrolysisSnapshot {
    pub powered: bool,
    pub speed: f64,
    pub particles: Vec<Particle>,
    pub census: Census,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydraulicsSnapshot {
    pub module: HydraulicModule,
    pub system: HydraulicSystem,
    pub input_force: f64,
    /// Pa under the input piston.
    pub pressure: f64,
    pub output_force: f64,
    pub resistance: Resistance,
}

/// Self-contained state published to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub tick: u64,
    pub linac: LinacSnapshot,
    pub electrolysis: ElectrolysisSnapshot,
    pub hydraulics: HydraulicsSnapshot,
    /// Scene name to the number of field updates applied so far.
    pub scene_revisions: BTreeMap<String, u64>,
    pub diagnostics: Vec<String>,
}

const MAX_DIAGNOSTICS: usize = 32;

#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: SimConfig,
    tick: u64,
    linac: LinacConfiguration,
    geometry: LinacGeometry,
    attachments: Vec<String>,
    collision: CollisionReport,
    electrolysis: ElectrolysisState,
    hydraulics: HydraulicSystem,
    hydraulic_module: HydraulicModule,
    input_force: f64,
    device: HapticDeviceConfig,
    scenes: BTreeMap<String, Document>,
    revisions: BTreeMap<String, u64>,
    attachments_dir: Option<PathBuf>,
    diagnostics: Vec<String>,
}

/// Scene name whose document receives linac attachments.
pub const LINAC_SCENE: &str = "linac";

impl Simulation {
    pub fn new(config: SimConfig) -> Self {
        let linac = LinacConfiguration::default();
        let geometry = LinacGeometry::reference();
        let collision = check_collision(&linac, &geometry, config.clearance);
        Simulation {
            tick: 0,
            linac,
            geometry,
            attachments: Vec::new(),
            collision,
            electrolysis: init_electrolysis(config.electrolysis_molecules, config.seed),
            hydraulics: HydraulicSystem::default(),
            hydraulic_module: HydraulicModule::default(),
            input_force: 0.0,
            device: HapticDeviceConfig::default(),
            scenes: BTreeMap::new(),
            revisions: BTreeMap::new(),
            attachments_dir: None,
            diagnostics: Vec::new(),
            config,
        }
    }

    pub fn with_attachments_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.attachments_dir = Some(dir.into());
        self
    }

    pub fn add_scene(&mut self, name: impl Into<String>, doc: Document) {
        let name = name.into();
        self.revisions.insert(name.clone(), 0);
        self.scenes.insert(name, doc);
    }

    pub fn scene(&self, name: &str) -> Option<&Document> {
        self.scenes.get(name)
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn linac(&self) -> &LinacConfiguration {
        &self.linac
    }

    pub fn linac_geometry(&self) -> &LinacGeometry {
        &self.geometry
    }

    pub fn electrolysis(&self) -> &ElectrolysisState {
        &self.electrolysis
    }

    pub fn hydraulics(&self) -> &HydraulicSystem {
        &self.hydraulics
    }

    fn note(&mut self, message: String) {
        self.diagnostics
            .push(format!("tick {}: {message}", self.tick));
        if self.diagnostics.len() > MAX_DIAGNOSTICS {
            self.diagnostics.remove(0);
        }
    }

    fn refresh_collision(&mut self) {
        self.collision = check_collision(&self.linac, &self.geometry, self.config.clearance);
    }

    /// Applies one command between ticks. Failures leave the state as it
    /// was and are also recorded in the snapshot diagnostics.
    pub fn apply(&mut self, command: &Command) -> Result<(), CommandError> {
        let result = self.apply_inner(command);
        if let Err(e) = &result {
            self.note(e.to_string());
        }
        result
    }

    fn apply_inner(&mut self, command: &Command) -> Result<(), CommandError> {
        command.validate()?;
        let rejected = |e: &dyn std::fmt::Display| CommandError::Rejected(e.to_string());
        match command {
            Command::LinacAxis { axis, value } => {
                self.linac = set_axis(&self.linac, *axis, *value).map_err(|e| rejected(&e))?;
                self.refresh_collision();
            }
            Command::Electrolysis(action) => match action {
                ElectrolysisAction::Power { on } => self.electrolysis.powered = *on,
                ElectrolysisAction::Speed { value } => self
                    .electrolysis
                    .set_speed(*value)
                    .map_err(|e| rejected(&e))?,
                ElectrolysisAction::Reset { molecules, seed } => {
                    if *molecules > 100_000 {
                        return Err(CommandError::ValidationFailed(
                            "at most 100000 molecules".into(),
                        ));
                    }
                    let speed = self.electrolysis.speed;
                    self.electrolysis = init_electrolysis(*molecules, *seed);
                    self.electrolysis.speed = speed;
                }
            },
            Command::Hydraulics(action) => match action {
                HydraulicsAction::Push { displacement } => {
                    self.hydraulics =
                        lift_step(&self.hydraulics, *displacement).map_err(|e| rejected(&e))?;
                }
                HydraulicsAction::SetLoad { mass } => self.hydraulics.load_mass = *mass,
                HydraulicsAction::SetModule { module } => self.hydraulic_module = *module,
                HydraulicsAction::SetAreas { area_in, area_out } => {
                    let fresh =
                        HydraulicSystem::new(*area_in, *area_out).map_err(|e| rejected(&e))?;
                    self.hydraulics = HydraulicSystem {
                        load_mass: self.hydraulics.load_mass,
                        stroke_limit: self.hydraulics.stroke_limit,
                        ..fresh
                    };
                }
                HydraulicsAction::SetInputForce { force } => self.input_force = *force,
            },
            Command::SceneField {
                scene,
                node,
                field,
                value,
            } => {
                let doc = self
                    .scenes
                    .get(scene)
                    .ok_or_else(|| CommandError::Rejected(format!("no scene named {scene:?}")))?;
                let update = FieldUpdate {
                    target: node.clone(),
                    field: field.clone(),
                    value: value.clone(),
                    tick: self.tick,
                };
                let doc = apply_update(doc, &update).map_err(|e| rejected(&e))?;
                self.scenes.insert(scene.clone(), doc);
                *self.revisions.entry(scene.clone()).or_default() += 1;
            }
            Command::Attachment { name } => {
                let dir = self.attachments_dir.clone().ok_or_else(|| {
                    CommandError::Rejected("no attachment registry configured".into())
                })?;
                let empty = Document::default();
                let doc = self.scenes.get(LINAC_SCENE).unwrap_or(&empty);
                let loaded =
                    load_attachment(doc, &self.geometry, &dir, name).map_err(|e| rejected(&e))?;
                for d in &loaded.diagnostics {
                    self.note(format!("attachment {name}: {d}"));
                }
                if self.scenes.contains_key(LINAC_SCENE) {
                    self.scenes.insert(LINAC_SCENE.into(), loaded.document);
                    *self.revisions.entry(LINAC_SCENE.into()).or_default() += 1;
                }
                self.geometry = loaded.geometry;
                self.attachments.push(name.clone());
                self.refresh_collision();
            }
        }
        Ok(())
    }

    /// Advances every simulation by one tick.
    pub fn step(&mut self) {
        self.tick += 1;
        match step_electrolysis(&self.electrolysis, self.config.dt()) {
            Ok(next) => self.electrolysis = next,
            Err(e) => self.note(e.to_string()),
        }
    }

    fn hydraulics_snapshot(&self) -> HydraulicsSnapshot {
        let sys = &self.hydraulics;
        HydraulicsSnapshot {
            module: self.hydraulic_module,
            system: *sys,
            input_force: self.input_force,
            pressure: pressure(self.input_force, sys.area_in).unwrap_or(0.0),
            output_force: transmit_force(sys, self.input_force),
            resistance: haptic_resistance(
                sys,
                self.config.gravity,
                &-Vector3::y(),
                &Vector3::zeros(),
                &self.device,
            ),
        }
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            tick: self.tick,
            linac: LinacSnapshot {
                config: self.linac,
                attachments: self.attachments.clone(),
                collision: self.collision.clone(),
            },
            electrolysis: ElectrolysisSnapshot {
                powered: self.electrolysis.powered,
                speed: self.electrolysis.speed,
                particles: self.electrolysis.particles.clone(),
                census: census(&self.electrolysis),
            },
            hydraulics: self.hydraulics_snapshot(),
            scene_revisions: self.revisions.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

/// A renderable primitive: the client tessellates it at `transform`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveInstance {
    /// DEF of the `Shape` node, when it has one.
    pub def: Option<String>,
    pub path: String,
    pub shape: Shape,
    /// Row-major world matrix.
    pub transform: [f64; 16],
    pub diffuse_color: [f64; 3],
    pub transparency: f64,
}

/// Flattens a scene into world-placed primitives. Shapes with unsupported
/// or invalid geometry are skipped.
pub fn primitive_list(doc: &Document) -> Vec<PrimitiveInstance> {
    let mut out = Vec::new();
    for (path, node) in doc.root.walk() {
        if node.kind != NodeKind::Shape {
            continue;
        }
        let Some(shape) = node
            .children
            .iter()
            .find(|c| c.node.kind.is_geometry())
            .and_then(|c| Shape::from_node(&c.node).ok())
        else {
            continue;
        };
        let material = node
            .children
            .iter()
            .find(|c| c.node.kind == NodeKind::Appearance)
            .and_then(|a| {
                a.node
                    .children
                    .iter()
                    .find(|c| c.node.kind == NodeKind::Material)
            })
            .map(|c| &c.node);
        let (diffuse_color, transparency) = match material {
            Some(m) => (
                m.vec3("diffuseColor").unwrap_or([0.8; 3]),
                m.float("transparency").unwrap_or(0.0),
            ),
            None => ([1.0; 3], 0.0),
        };
        out.push(PrimitiveInstance {
            def: node.def.clone(),
            path: path.to_string(),
            shape,
            transform: matrix_to_row_major(&path_transform(doc, &path)),
            diffuse_color,
            transparency,
        });
    }
    out
}
