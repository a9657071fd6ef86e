//! Linear accelerator treatment-room model: axis control, kinematic chain,
//! machine/couch/patient collision checks, beam-arrangement sweeps and the
//! runtime attachment registry.
//!
//! Room axes: `y` runs along the couch (gantry rotation axis), `z` points up
//! and `x` is lateral. The isocentre is the room origin.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{distance, GeometryError, PlacedShape, Shape};
use crate::scene::{path_transform, rotation_quaternion, Matrix4};
use crate::x3d::{parse_x3d, Child, Diagnostic, Document, NodeKind, Rotation, Route, X3dError};

/// DEF name of the collimator frame node in linac scenes.
pub const COLLIMATOR_DEF: &str = "COLLIMATOR";
pub const SCENE_EXTENSION: &str = "x3d";

#[derive(Debug, Error)]
pub enum LinacError {
    #[error("unknown axis {0:?}")]
    UnknownAxis(String),
    #[error("axis {axis} value must be finite, got {value}")]
    NonFiniteValue { axis: Axis, value: f64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid beam arrangement: {0}")]
    InvalidPlan(String),
    #[error("cannot read attachment directory {path}: {source}")]
    DirectoryUnreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("attachment {0:?} not found")]
    NotFound(String),
    #[error("attachment {name:?} failed to parse: {source}")]
    ParseFailed { name: String, source: X3dError },
    #[error("attachment {name:?} has an unusable solid: {source}")]
    BadSolid { name: String, source: GeometryError },
    #[error("scene has no node with DEF {0:?}")]
    MissingFrame(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Gantry,
    Collimator,
    CouchRotation,
    CouchVertical,
    CouchLongitudinal,
    CouchLateral,
}

impl Axis {
    pub const ALL: [Axis; 6] = [
        Axis::Gantry,
        Axis::Collimator,
        Axis::CouchRotation,
        Axis::CouchVertical,
        Axis::CouchLongitudinal,
        Axis::CouchLateral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Gantry => "gantry",
            Axis::Collimator => "collimator",
            Axis::CouchRotation => "couch_rotation",
            Axis::CouchVertical => "couch_vertical",
            Axis::CouchLongitudinal => "couch_longitudinal",
            Axis::CouchLateral => "couch_lateral",
        }
    }

    pub fn is_rotational(self) -> bool {
        matches!(self, Axis::Gantry | Axis::Collimator | Axis::CouchRotation)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = LinacError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| LinacError::UnknownAxis(s.to_string()))
    }
}

/// Closed interval `[min, max]` for a translational axis, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limit {
    pub min: f64,
    pub max: f64,
}

impl Limit {
    pub const fn new(min: f64, max: f64) -> Self {
        Limit { min, max }
    }
}

/// Travel limits of the couch translations.
///
/// Vertical travel is a lowering distance: positive values move the couch
/// down, away from the gantry head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisLimits {
    pub couch_vertical: Limit,
    pub couch_longitudinal: Limit,
    pub couch_lateral: Limit,
}

impl Default for AxisLimits {
    fn default() -> Self {
        AxisLimits {
            couch_vertical: Limit::new(0.0, 0.5),
            couch_longitudinal: Limit::new(-0.5, 0.5),
            couch_lateral: Limit::new(-0.2, 0.2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinacConfiguration {
    pub gantry_deg: f64,
    pub collimator_deg: f64,
    pub couch_rotation_deg: f64,
    pub couch_vertical_m: f64,
    pub couch_longitudinal_m: f64,
    pub couch_lateral_m: f64,
    #[serde(default)]
    pub limits: AxisLimits,
}

impl Default for LinacConfiguration {
    fn default() -> Self {
        LinacConfiguration::with_limits(AxisLimits::default())
    }
}

fn wrap_degrees(v: f64) -> f64 {
    let w = v.rem_euclid(360.0);
    // rem_euclid rounds tiny negative inputs up to exactly 360.
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

impl LinacConfiguration {
    pub fn with_limits(limits: AxisLimits) -> Self {
        LinacConfiguration {
            gantry_deg: 0.0,
            collimator_deg: 0.0,
            couch_rotation_deg: 0.0,
            couch_vertical_m: 0.0f64.clamp(limits.couch_vertical.min, limits.couch_vertical.max),
            couch_longitudinal_m: 0.0f64
                .clamp(limits.couch_longitudinal.min, limits.couch_longitudinal.max),
            couch_lateral_m: 0.0f64.clamp(limits.couch_lateral.min, limits.couch_lateral.max),
            limits,
        }
    }

    pub fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Gantry => self.gantry_deg,
            Axis::Collimator => self.collimator_deg,
            Axis::CouchRotation => self.couch_rotation_deg,
            Axis::CouchVertical => self.couch_vertical_m,
            Axis::CouchLongitudinal => self.couch_longitudinal_m,
            Axis::CouchLateral => self.couch_lateral_m,
        }
    }

    pub fn limit(&self, axis: Axis) -> Option<Limit> {
        match axis {
            Axis::CouchVertical => Some(self.limits.couch_vertical),
            Axis::CouchLongitudinal => Some(self.limits.couch_longitudinal),
            Axis::CouchLateral => Some(self.limits.couch_lateral),
            _ => None,
        }
    }

    /// Whether every axis already satisfies its wrap or clamp rule.
    pub fn is_in_range(&self) -> bool {
        Axis::ALL.into_iter().all(|a| {
            let v = self.get(a);
            match self.limit(a) {
                Some(l) => v >= l.min && v <= l.max,
                None => (0.0..360.0).contains(&v),
            }
        })
    }

    /// Pose of a chain frame in room coordinates.
    pub fn frame_pose(&self, frame: Frame) -> Isometry3<f64> {
        let gantry = || {
            Isometry3::from_parts(
                Translation3::identity(),
                UnitQuaternion::from_axis_angle(&Vector3::y_axis(), self.gantry_deg.to_radians()),
            )
        };
        match frame {
            Frame::Room => Isometry3::identity(),
            Frame::Gantry => gantry(),
            Frame::Collimator => {
                gantry()
                    * Isometry3::from_parts(
                        Translation3::identity(),
                        UnitQuaternion::from_axis_angle(
                            &Vector3::z_axis(),
                            self.collimator_deg.to_radians(),
                        ),
                    )
            }
            Frame::Couch => {
                Isometry3::from_parts(
                    Translation3::identity(),
                    UnitQuaternion::from_axis_angle(
                        &Vector3::z_axis(),
                        self.couch_rotation_deg.to_radians(),
                    ),
                ) * Translation3::new(
                    self.couch_lateral_m,
                    self.couch_longitudinal_m,
                    -self.couch_vertical_m,
                )
            }
        }
    }
}

/// Sets one axis. Rotations wrap into `[0, 360)`; translations clamp to the
/// configured limits.
pub fn set_axis(
    cfg: &LinacConfiguration,
    axis: Axis,
    value: f64,
) -> Result<LinacConfiguration, LinacError> {
    if !value.is_finite() {
        return Err(LinacError::NonFiniteValue { axis, value });
    }
    let mut out = *cfg;
    let clamp = |l: Limit| value.clamp(l.min, l.max);
    match axis {
        Axis::Gantry => out.gantry_deg = wrap_degrees(value),
        Axis::Collimator => out.collimator_deg = wrap_degrees(value),
        Axis::CouchRotation => out.couch_rotation_deg = wrap_degrees(value),
        Axis::CouchVertical => out.couch_vertical_m = clamp(cfg.limits.couch_vertical),
        Axis::CouchLongitudinal => out.couch_longitudinal_m = clamp(cfg.limits.couch_longitudinal),
        Axis::CouchLateral => out.couch_lateral_m = clamp(cfg.limits.couch_lateral),
    }
    Ok(out)
}

/// Links of the kinematic chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Room,
    Gantry,
    Collimator,
    Couch,
}

impl Frame {
    /// Parts on these frames never get checked against each other.
    fn rigidly_linked(self, other: Frame) -> bool {
        self == other
            || matches!(
                (self, other),
                (Frame::Gantry, Frame::Collimator) | (Frame::Collimator, Frame::Gantry)
            )
    }
}

/// A primitive solid fixed to a chain frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Part {
    pub name: String,
    pub frame: Frame,
    pub shape: Shape,
    /// Offset within the frame.
    pub translation: [f64; 3],
    pub rotation: Rotation,
}

impl Part {
    pub fn new(name: impl Into<String>, frame: Frame, shape: Shape) -> Self {
        Part {
            name: name.into(),
            frame,
            shape,
            translation: [0.0; 3],
            rotation: Rotation::IDENTITY,
        }
    }

    pub fn at(mut self, translation: [f64; 3]) -> Self {
        self.translation = translation;
        self
    }

    pub fn rotated(mut self, axis: [f64; 3], angle: f64) -> Self {
        self.rotation = Rotation::new(axis, angle).expect("non-zero rotation axis");
        self
    }

    pub fn offset(&self) -> Isometry3<f64> {
        let [x, y, z] = self.translation;
        Isometry3::from_parts(
            Translation3::new(x, y, z),
            rotation_quaternion(&self.rotation),
        )
    }

    pub fn placed(&self, cfg: &LinacConfiguration) -> PlacedShape {
        PlacedShape::new(self.shape, cfg.frame_pose(self.frame) * self.offset())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinacGeometry {
    pub parts: Vec<Part>,
    /// Solids of loaded attachments; always on the collimator frame.
    pub attachments: Vec<Part>,
}

impl LinacGeometry {
    /// The reference treatment room: a gantry head and collimator above a
    /// couch top carrying a capsule patient.
    pub fn reference() -> Self {
        let quarter = std::f64::consts::FRAC_PI_2;
        LinacGeometry {
            parts: vec![
                Part::new(
                    "head",
                    Frame::Gantry,
                    Shape::Cylinder {
                        radius: 0.35,
                        height: 0.3,
                    },
                )
                .at([0.0, 0.0, 0.55])
                .rotated([1.0, 0.0, 0.0], quarter),
                Part::new(
                    "collimator",
                    Frame::Collimator,
                    Shape::Cylinder {
                        radius: 0.15,
                        height: 0.1,
                    },
                )
                .at([0.0, 0.0, 0.35])
                .rotated([1.0, 0.0, 0.0], quarter),
                Part::new(
                    "couch_top",
                    Frame::Couch,
                    Shape::Box {
                        size: [0.5, 2.0, 0.05],
                    },
                )
                .at([0.0, 0.0, -0.145]),
                Part::new(
                    "patient",
                    Frame::Couch,
                    Shape::Capsule {
                        radius: 0.12,
                        half_length: 0.7,
                    },
                ),
            ],
            attachments: Vec::new(),
        }
    }

    pub fn all_parts(&self) -> impl Iterator<Item = &Part> {
        self.parts.iter().chain(&self.attachments)
    }

    pub fn validate(&self) -> Result<(), LinacError> {
        let mut names = BTreeMap::new();
        for p in self.all_parts() {
            if matches!(p.shape, Shape::Plane) {
                return Err(LinacError::InvalidGeometry(format!(
                    "part {:?} is unbounded",
                    p.name
                )));
            }
            let dims_ok = match p.shape {
                Shape::Capsule {
                    radius,
                    half_length,
                } => radius > 0.0 && half_length > 0.0,
                s => s.half_extents().iter().all(|v| *v > 0.0 && v.is_finite()),
            };
            if !dims_ok {
                return Err(LinacError::InvalidGeometry(format!(
                    "part {:?} has non-positive dimensions",
                    p.name
                )));
            }
            if names.insert(p.name.as_str(), ()).is_some() {
                return Err(LinacError::InvalidGeometry(format!(
                    "duplicate part name {:?}",
                    p.name
                )));
            }
        }
        if self
            .attachments
            .iter()
            .any(|p| p.frame != Frame::Collimator)
        {
            return Err(LinacError::InvalidGeometry(
                "attachments must sit on the collimator frame".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub a: String,
    pub b: String,
    /// Zero when touching or overlapping.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub colliding: bool,
    /// Pairs closer than the clearance, or touching.
    pub pairs: Vec<PairDistance>,
    pub config: LinacConfiguration,
}

/// Exact minimum distances for every checked pair, ordered by part names.
pub fn pair_distances(cfg: &LinacConfiguration, geo: &LinacGeometry) -> Vec<PairDistance> {
    let mut parts: Vec<&Part> = geo.all_parts().collect();
    parts.sort_by(|a, b| a.name.cmp(&b.name));
    let placed: Vec<PlacedShape> = parts.iter().map(|p| p.placed(cfg)).collect();
    let mut out = Vec::new();
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            if parts[i].frame.rigidly_linked(parts[j].frame) {
                continue;
            }
            out.push(PairDistance {
                a: parts[i].name.clone(),
                b: parts[j].name.clone(),
                distance: distance(&placed[i], &placed[j]),
            });
        }
    }
    out
}

/// Poses every part through the chain and reports all cross-frame pairs
/// that touch or come within `clearance` metres.
pub fn check_collision(
    cfg: &LinacConfiguration,
    geo: &LinacGeometry,
    clearance: f64,
) -> CollisionReport {
    let pairs: Vec<PairDistance> = pair_distances(cfg, geo)
        .into_iter()
        .filter(|p| p.distance <= 0.0 || p.distance < clearance)
        .collect();
    CollisionReport {
        colliding: !pairs.is_empty(),
        pairs,
        config: *cfg,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BeamArrangement {
    pub control_points: Vec<LinacConfiguration>,
    /// When set, the gantry sweeps from each control point to the next in
    /// increasing angle at this step, in degrees.
    #[serde(default)]
    pub arc_step_deg: Option<f64>,
}

impl BeamArrangement {
    pub fn points(control_points: Vec<LinacConfiguration>) -> Self {
        BeamArrangement {
            control_points,
            arc_step_deg: None,
        }
    }

    /// A full-featured arc from `start` to `stop` gantry degrees with the
    /// remaining axes taken from `base`.
    pub fn arc(base: &LinacConfiguration, start_deg: f64, stop_deg: f64, step_deg: f64) -> Self {
        BeamArrangement {
            control_points: vec![
                LinacConfiguration {
                    gantry_deg: start_deg,
                    ..*base
                },
                LinacConfiguration {
                    gantry_deg: stop_deg,
                    ..*base
                },
            ],
            arc_step_deg: Some(step_deg),
        }
    }

    pub fn validate(&self) -> Result<(), LinacError> {
        if let Some(step) = self.arc_step_deg {
            if !(step > 0.0 && step.is_finite()) {
                return Err(LinacError::InvalidPlan(format!(
                    "arc step must be positive, got {step}"
                )));
            }
        }
        for cp in &self.control_points {
            if Axis::ALL.into_iter().any(|a| !cp.get(a).is_finite()) {
                return Err(LinacError::InvalidPlan(
                    "control point has a non-finite axis".into(),
                ));
            }
        }
        Ok(())
    }

    /// Control points after arc expansion, with every axis normalized.
    pub fn expand(&self) -> Result<Vec<LinacConfiguration>, LinacError> {
        self.validate()?;
        let normalize = |cp: &LinacConfiguration| -> Result<LinacConfiguration, LinacError> {
            Axis::ALL
                .into_iter()
                .try_fold(*cp, |c, a| set_axis(&c, a, cp.get(a)))
        };
        let points = self
            .control_points
            .iter()
            .map(normalize)
            .collect::<Result<Vec<_>, _>>()?;
        let Some(step) = self.arc_step_deg else {
            return Ok(points);
        };
        let mut out = Vec::new();
        if let Some(first) = points.first() {
            out.push(*first);
        }
        for pair in points.windows(2) {
            let (from, to) = (pair[0], pair[1]);
            let span = (to.gantry_deg - from.gantry_deg).rem_euclid(360.0);
            let n = (span / step + 1e-9).floor() as usize;
            for k in 1..=n {
                out.push(LinacConfiguration {
                    gantry_deg: wrap_degrees(from.gantry_deg + k as f64 * step),
                    ..from
                });
            }
            if out.last().map(|c| c.gantry_deg) != Some(to.gantry_deg) {
                out.push(to);
            }
        }
        Ok(out)
    }
}

/// Closed interval of gantry angles. `start_deg > end_deg` means the
/// interval wraps through 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleInterval {
    pub start_deg: f64,
    pub end_deg: f64,
}

impl AngleInterval {
    pub fn contains(&self, deg: f64) -> bool {
        if self.start_deg <= self.end_deg {
            deg >= self.start_deg && deg <= self.end_deg
        } else {
            deg >= self.start_deg || deg <= self.end_deg
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub config: LinacConfiguration,
    pub report: CollisionReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub colliding_intervals: Vec<AngleInterval>,
}

/// Checks every control point (arcs expanded) in parallel; results keep
/// input order.
pub fn sweep_beam_arrangement(
    plan: &BeamArrangement,
    geo: &LinacGeometry,
    clearance: f64,
) -> Result<SweepReport, LinacError> {
    let points = plan.expand()?;
    let entries: Vec<SweepEntry> = points
        .par_iter()
        .map(|cfg| SweepEntry {
            config: *cfg,
            report: check_collision(cfg, geo, clearance),
        })
        .collect();

    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        if !e.report.colliding {
            continue;
        }
        match runs.last_mut() {
            Some((_, end)) if *end + 1 == i => *end = i,
            _ => runs.push((i, i)),
        }
    }
    // A closed full circle joins its last and first runs.
    if let (Some(step), true) = (plan.arc_step_deg, runs.len() > 1) {
        let last = entries.len() - 1;
        let wraps =
            wrap_degrees(entries[last].config.gantry_deg + step) == entries[0].config.gantry_deg;
        if wraps && runs[0].0 == 0 && runs[runs.len() - 1].1 == last {
            let (_, first_end) = runs.remove(0);
            runs.last_mut().expect("more than one run").1 = first_end;
        }
    }
    let colliding_intervals = runs
        .into_iter()
        .map(|(s, e)| AngleInterval {
            start_deg: entries[s].config.gantry_deg,
            end_deg: entries[e].config.gantry_deg,
        })
        .collect();
    Ok(SweepReport {
        entries,
        colliding_intervals,
    })
}

/// Attachment names (file stems of scene files), sorted. Reads the
/// directory on every call.
pub fn list_attachments(dir: &Path) -> Result<Vec<String>, LinacError> {
    let unreadable = |source| LinacError::DirectoryUnreadable {
        path: dir.display().to_string(),
        source,
    };
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(unreadable)? {
        let entry = entry.map_err(unreadable)?;
        let path = entry.path();
        let is_scene = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case(SCENE_EXTENSION));
        if !is_scene || !entry.file_type().map_err(unreadable)?.is_file() {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            names.push(stem.to_string());
        }
    }
    names.sort();
    Ok(names)
}

fn isometry_from_matrix(m: &Matrix4) -> Isometry3<f64> {
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    Isometry3::from_parts(Translation3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]), rotation)
}

/// Collision solids of a standalone attachment document, one per `Shape`
/// with supported geometry, posed in the attachment's own frame.
pub fn attachment_solids(doc: &Document, prefix: &str) -> Result<Vec<Part>, GeometryError> {
    let mut out = Vec::new();
    for (path, node) in doc.root.walk() {
        if node.kind != NodeKind::Shape {
            continue;
        }
        let Some(geometry) = node.children.iter().find(|c| c.node.kind.is_geometry()) else {
            continue;
        };
        let shape = Shape::from_node(&geometry.node)?;
        let pose = isometry_from_matrix(&path_transform(doc, &path));
        let (axis, angle) = pose
            .rotation
            .axis_angle()
            .map(|(a, t)| ([a.x, a.y, a.z], t))
            .unwrap_or(([0.0, 0.0, 1.0], 0.0));
        let t = pose.translation.vector;
        out.push(Part {
            name: format!("{prefix}.{}", out.len()),
            frame: Frame::Collimator,
            shape,
            translation: [t.x, t.y, t.z],
            rotation: Rotation::new(axis, angle).unwrap_or(Rotation::IDENTITY),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LoadedAttachment {
    pub document: Document,
    pub geometry: LinacGeometry,
    /// Parser and validator diagnostics from the attachment file.
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses a registry attachment and grafts it under the collimator frame of
/// `doc`. Each load is an independent instance: DEF names inside the graft
/// get an instance suffix and its solids join `geo.attachments`.
pub fn load_attachment(
    doc: &Document,
    geo: &LinacGeometry,
    dir: &Path,
    name: &str,
) -> Result<LoadedAttachment, LinacError> {
    if !list_attachments(dir)?.iter().any(|n| n == name) {
        return Err(LinacError::NotFound(name.to_string()));
    }
    let path = dir.join(format!("{name}.{SCENE_EXTENSION}"));
    let bytes = std::fs::read(&path).map_err(|_| LinacError::NotFound(name.to_string()))?;
    let parsed = crate::x3d::parse_x3d_bytes(&bytes).map_err(|source| LinacError::ParseFailed {
        name: name.to_string(),
        source,
    })?;
    let mut diagnostics = parsed.diagnostics;
    diagnostics.extend(crate::x3d::validate(&parsed.document));
    let mut attachment = parsed.document;

    let collimator = doc
        .find_def(COLLIMATOR_DEF)
        .ok_or_else(|| LinacError::MissingFrame(COLLIMATOR_DEF.to_string()))?;

    let instance = 1 + geo
        .attachments
        .iter()
        .filter_map(|p| p.name.split_once('#'))
        .filter(|(n, _)| *n == name)
        .filter_map(|(_, rest)| rest.split('.').next()?.parse::<usize>().ok())
        .max()
        .unwrap_or(0);
    let prefix = format!("{name}#{instance}");
    let solids =
        attachment_solids(&attachment, &prefix).map_err(|source| LinacError::BadSolid {
            name: name.to_string(),
            source,
        })?;

    let rename = |def: &str| format!("{def}_{name}{instance}");
    for (p, _) in attachment
        .root
        .walk()
        .into_iter()
        .map(|(p, n)| (p, n.def.clone()))
        .collect::<Vec<_>>()
    {
        if let Some(node) = attachment.node_mut(&p) {
            node.def = node.def.as_deref().map(rename);
        }
    }
    let routes: Vec<Route> = attachment
        .routes
        .iter()
        .map(|r| Route {
            from_node: rename(&r.from_node),
            from_field: r.from_field.clone(),
            to_node: rename(&r.to_node),
            to_field: r.to_field.clone(),
        })
        .collect();

    let mut document = doc.clone();
    let target = document
        .node_mut(&collimator)
        .expect("find_def yields a live path");
    for child in std::mem::take(&mut attachment.root.children) {
        target.children.push(Child {
            container_field: "children".into(),
            node: child.node,
        });
    }
    document.routes.extend(routes);

    let mut geometry = geo.clone();
    geometry.attachments.extend(solids);
    Ok(LoadedAttachment {
        document,
        geometry,
        diagnostics,
    })
}

/// Parses the text of a linac scene and checks that it has a collimator
/// frame to receive attachments.
pub fn parse_linac_scene(text: &str) -> Result<Document, LinacError> {
    let doc = parse_x3d(text)
        .map_err(|source| LinacError::ParseFailed {
            name: "scene".into(),
            source,
        })?
        .document;
    if doc.find_def(COLLIMATOR_DEF).is_none() {
        return Err(LinacError::MissingFrame(COLLIMATOR_DEF.to_string()));
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_rules() {
        let c = LinacConfiguration::default();
        assert_eq!(set_axis(&c, Axis::Gantry, 180.0).unwrap().gantry_deg, 180.0);
        assert_eq!(
            set_axis(&c, Axis::Collimator, -30.0)
                .unwrap()
                .collimator_deg,
            330.0
        );
        assert_eq!(
            set_axis(&c, Axis::CouchVertical, 9.0)
                .unwrap()
                .couch_vertical_m,
            0.5
        );
        assert_eq!(set_axis(&c, Axis::Gantry, 360.0).unwrap().gantry_deg, 0.0);
        assert_eq!(set_axis(&c, Axis::Gantry, -1e-300).unwrap().gantry_deg, 0.0);
        assert!(matches!(
            set_axis(&c, Axis::Gantry, f64::NAN),
            Err(LinacError::NonFiniteValue { .. })
        ));
        assert!(matches!(
            "table".parse::<Axis>(),
            Err(LinacError::UnknownAxis(_))
        ));
        assert_eq!("couch_lateral".parse::<Axis>().unwrap(), Axis::CouchLateral);
    }

    #[test]
    fn reference_default_pose_is_clear() {
        let geo = LinacGeometry::reference();
        geo.validate().unwrap();
        let r = check_collision(&LinacConfiguration::default(), &geo, 0.0);
        assert!(!r.colliding, "{r:?}");
    }

    #[test]
    fn gantry_down_with_lowered_couch_collides() {
        let geo = LinacGeometry::reference();
        let c = set_axis(&LinacConfiguration::default(), Axis::Gantry, 180.0).unwrap();
        let c = set_axis(&c, Axis::CouchVertical, 1.0).unwrap();
        assert!(check_collision(&c, &geo, 0.0).colliding);
    }

    #[test]
    fn empty_geometry() {
        let r = check_collision(
            &LinacConfiguration::default(),
            &LinacGeometry::default(),
            1.0,
        );
        assert!(!r.colliding);
        assert!(r.pairs.is_empty());
    }

    #[test]
    fn frames_compose() {
        let mut c = LinacConfiguration {
            gantry_deg: 90.0,
            ..Default::default()
        };
        let p = c.frame_pose(Frame::Gantry) * nalgebra::Point3::new(0.0, 0.0, 1.0);
        assert!((p.coords - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        c.couch_vertical_m = 0.3;
        c.couch_rotation_deg = 90.0;
        c.couch_lateral_m = 0.1;
        let p = c.frame_pose(Frame::Couch) * nalgebra::Point3::origin();
        assert!((p.coords - Vector3::new(0.0, 0.1, -0.3)).norm() < 1e-12);
    }

    #[test]
    fn clearance_widens_report() {
        let geo = LinacGeometry::reference();
        let c = LinacConfiguration::default();
        let d = pair_distances(&c, &geo);
        let min = d.iter().map(|p| p.distance).fold(f64::INFINITY, f64::min);
        assert!(min > 0.0);
        assert!(!check_collision(&c, &geo, min * 0.99).colliding);
        assert!(check_collision(&c, &geo, min * 1.01).colliding);
    }

    #[test]
    fn plan_expansion() {
        let base = LinacConfiguration::default();
        let plan = BeamArrangement::arc(&base, 350.0, 10.0, 5.0);
        let angles: Vec<f64> = plan
            .expand()
            .unwrap()
            .iter()
            .map(|c| c.gantry_deg)
            .collect();
        assert_eq!(angles, vec![350.0, 355.0, 0.0, 5.0, 10.0]);
        assert!(BeamArrangement::arc(&base, 0.0, 10.0, 0.0)
            .validate()
            .is_err());
        assert!(sweep_beam_arrangement(
            &BeamArrangement::default(),
            &LinacGeometry::reference(),
            0.0
        )
        .unwrap()
        .entries
        .is_empty());
    }

    #[test]
    fn wrapped_interval() {
        let i = AngleInterval {
            start_deg: 350.0,
            end_deg: 10.0,
        };
        assert!(i.contains(0.0) && i.contains(355.0) && !i.contains(180.0));
    }
}
