//! Virtual haptic device and force rendering.
//!
//! The device is modelled by its five performance measures (degrees of
//! freedom, workspace, position resolution, maximum force and maximum
//! stiffness) plus a position calibration matrix. Contact uses a penalty
//! force along the surface normal and a god-object proxy with Coulomb
//! stick/slip friction in the tangent plane. The servo loop runs at a fixed
//! 1 kHz.

use std::fmt::Write as _;

use nalgebra::{Point3, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, GeometryError, PlacedShape, Shape};
use crate::scene::Matrix4;
use crate::x3d::{FieldValue, Node, NodeKind};

pub const SERVO_RATE_HZ: f64 = 1000.0;
pub const SERVO_DT: f64 = 1.0 / SERVO_RATE_HZ;

/// Relative tolerance used to decide that a coordinate sits on a grid tie
/// or on a grid point.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HapticsError {
    #[error("invalid device configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid surface parameters: {0}")]
    InvalidSurface(String),
    #[error("friction step requires contact (non-zero normal force)")]
    NotInContact,
    #[error("tangential spring must be non-negative and finite")]
    InvalidSpring,
    #[error(transparent)]
    UnsupportedShape(#[from] GeometryError),
    #[error("trajectory line {line}: {message}")]
    BadTrajectory { line: usize, message: String },
    #[error("probe failed: {0}")]
    ProbeFailed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HapticDeviceConfig {
    /// Positional degrees of freedom that are simulated.
    pub dof: u8,
    pub workspace: Aabb,
    /// Smallest detectable position change, metres.
    pub position_resolution: f64,
    /// Newtons.
    pub max_force: f64,
    /// N/m.
    pub max_stiffness: f64,
    pub calibration: Matrix4,
}

impl Default for HapticDeviceConfig {
    /// Roughly a desktop 3-DOF stylus device.
    fn default() -> Self {
        HapticDeviceConfig {
            dof: 3,
            workspace: Aabb::symmetric(0.2),
            position_resolution: 1e-4,
            max_force: 3.3,
            max_stiffness: 2000.0,
            calibration: Matrix4::identity(),
        }
    }
}

impl HapticDeviceConfig {
    pub fn validate(&self) -> Result<(), HapticsError> {
        let bad = |m: &str| Err(HapticsError::InvalidConfig(m.to_string()));
        if self.dof == 0 || self.dof > 6 {
            return bad("dof must be between 1 and 6");
        }
        if !self.workspace.is_valid() {
            return bad("workspace min must be below max on every axis");
        }
        if !(self.position_resolution > 0.0 && self.position_resolution.is_finite()) {
            return bad("position_resolution must be positive");
        }
        if !(self.max_force > 0.0 && self.max_force.is_finite()) {
            return bad("max_force must be positive");
        }
        if !(self.max_stiffness > 0.0 && self.max_stiffness.is_finite()) {
            return bad("max_stiffness must be positive");
        }
        for i in 0..3 {
            let (lo, hi) = grid_range(
                self.workspace.min[i],
                self.workspace.max[i],
                self.position_resolution,
            );
            if lo > hi {
                return bad("workspace must contain at least one resolution grid point per axis");
            }
        }
        let bottom = self.calibration.row(3);
        if bottom[(0, 0)] != 0.0
            || bottom[(0, 1)] != 0.0
            || bottom[(0, 2)] != 0.0
            || bottom[(0, 3)] != 1.0
        {
            return bad("calibration must be affine (bottom row 0 0 0 1)");
        }
        Ok(())
    }

    /// Takes the calibration from an `HLHapticsDevice` node; everything else
    /// comes from `base`.
    pub fn from_device_node(node: &Node, base: HapticDeviceConfig) -> Result<Self, HapticsError> {
        if node.kind != NodeKind::HLHapticsDevice {
            return Err(HapticsError::InvalidConfig(format!(
                "expected HLHapticsDevice, got {}",
                node.kind
            )));
        }
        let cfg = match node.field("positionCalibration") {
            Some(FieldValue::SFMatrix4f(m)) => HapticDeviceConfig {
                calibration: crate::scene::matrix_from_row_major(m),
                ..base
            },
            _ => base,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn effective_stiffness(&self, surface: &SurfaceParams) -> f64 {
        surface.stiffness.min(self.max_stiffness)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceParams {
    /// N/m.
    pub stiffness: f64,
    pub static_friction: f64,
    pub dynamic_friction: f64,
}

impl Default for SurfaceParams {
    fn default() -> Self {
        SurfaceParams::from_node(&Node::new(NodeKind::FrictionalSurface))
            .expect("schema defaults are valid")
    }
}

impl SurfaceParams {
    pub fn new(
        stiffness: f64,
        static_friction: f64,
        dynamic_friction: f64,
    ) -> Result<Self, HapticsError> {
        let s = SurfaceParams {
            stiffness,
            static_friction,
            dynamic_friction,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn frictionless(stiffness: f64) -> Self {
        SurfaceParams {
            stiffness,
            static_friction: 0.0,
            dynamic_friction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), HapticsError> {
        for (name, v) in [
            ("stiffness", self.stiffness),
            ("static_friction", self.static_friction),
            ("dynamic_friction", self.dynamic_friction),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(HapticsError::InvalidSurface(format!("{name} = {v}")));
            }
        }
        Ok(())
    }

    /// Reads a `FrictionalSurface` node.
    pub fn from_node(node: &Node) -> Result<Self, HapticsError> {
        if node.kind != NodeKind::FrictionalSurface {
            return Err(HapticsError::InvalidSurface(format!(
                "expected FrictionalSurface, got {}",
                node.kind
            )));
        }
        let f = |n: &str| node.float(n).unwrap_or(0.0);
        SurfaceParams::new(f("stiffness"), f("staticFriction"), f("dynamicFriction"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HapticDeviceState {
    /// Device units, before calibration.
    pub raw_position: Vector3<f64>,
    /// World metres after calibration, clamping and quantization.
    pub position: Vector3<f64>,
    /// God-object position.
    pub proxy: Vector3<f64>,
    pub output_force: Vector3<f64>,
    pub sticking: bool,
}

impl HapticDeviceState {
    pub fn at(position: Vector3<f64>) -> Self {
        HapticDeviceState {
            raw_position: position,
            position,
            proxy: position,
            output_force: Vector3::zeros(),
            sticking: false,
        }
    }
}

/// Homogeneous transform of a raw device position.
pub fn calibrate_position(raw: &Vector3<f64>, calibration: &Matrix4) -> Vector3<f64> {
    let v = calibration * Vector4::new(raw.x, raw.y, raw.z, 1.0);
    Vector3::new(v.x, v.y, v.z)
}

/// Grid indices `[lo, hi]` of resolution multiples inside `[min, max]`.
fn grid_range(min: f64, max: f64, res: f64) -> (f64, f64) {
    (
        (min / res - GRID_EPS).ceil(),
        (max / res + GRID_EPS).floor(),
    )
}

/// Nearest multiple of `res`, ties away from zero.
pub fn quantize(x: f64, res: f64) -> f64 {
    round_ties_away(x / res) * res
}

fn round_ties_away(q: f64) -> f64 {
    let floor = q.floor();
    if ((q - floor) - 0.5).abs() <= GRID_EPS * q.abs().max(1.0) {
        if q >= 0.0 {
            floor + 1.0
        } else {
            floor
        }
    } else {
        q.round()
    }
}

/// Whether `x` is a multiple of `res` up to floating-point noise.
pub fn on_grid(x: f64, res: f64) -> bool {
    let q = x / res;
    (q - q.round()).abs() <= GRID_EPS * q.abs().max(1.0)
}

/// Clamps into the workspace, then snaps to the resolution grid (nearest
/// multiple, ties away from zero, never leaving the workspace).
///
/// Non-finite coordinates are replaced by the workspace centre.
pub fn constrain_position(pos: &Vector3<f64>, cfg: &HapticDeviceConfig) -> Vector3<f64> {
    let res = cfg.position_resolution;
    let center = cfg.workspace.center();
    Vector3::from_fn(|i, _| {
        let (min, max) = (cfg.workspace.min[i], cfg.workspace.max[i]);
        let x = if pos[i].is_finite() {
            pos[i]
        } else {
            center[i]
        };
        let (lo, hi) = grid_range(min, max, res);
        let n = round_ties_away(x.clamp(min, max) / res).clamp(lo, hi);
        (n * res).clamp(min, max)
    })
}

/// Saturates the force magnitude at `max_force`, preserving direction.
/// Non-finite forces become zero.
pub fn clamp_force(force: &Vector3<f64>, max_force: f64) -> Vector3<f64> {
    if !force.iter().all(|v| v.is_finite()) {
        return Vector3::zeros();
    }
    let norm = force.norm();
    if norm <= max_force {
        return *force;
    }
    let mut scale = max_force / norm;
    let mut out = force * scale;
    while out.norm() > max_force {
        scale = scale.next_down();
        out = force * scale;
    }
    out
}

/// Applies the device's position and force limits.
pub fn constrain_state(
    pos: &Vector3<f64>,
    force: &Vector3<f64>,
    cfg: &HapticDeviceConfig,
) -> (Vector3<f64>, Vector3<f64>) {
    (
        constrain_position(pos, cfg),
        clamp_force(force, cfg.max_force),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub normal_force: Vector3<f64>,
    /// Metres; zero when not penetrating.
    pub penetration: f64,
    /// Outward unit normal; zero when not penetrating.
    pub normal: Vector3<f64>,
}

impl Contact {
    pub const NONE: Contact = Contact {
        normal_force: Vector3::new(0.0, 0.0, 0.0),
        penetration: 0.0,
        normal: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn in_contact(&self) -> bool {
        self.penetration > 0.0
    }
}

/// Penalty force `k * d * n` with `k = min(surface, device)` stiffness.
pub fn contact_force(
    device_pos: &Vector3<f64>,
    shape: &PlacedShape,
    surface: &SurfaceParams,
    cfg: &HapticDeviceConfig,
) -> Contact {
    match shape.penetration(&Point3::from(*device_pos)) {
        Some(pen) => {
            let k = cfg.effective_stiffness(surface);
            Contact {
                normal_force: pen.normal * (k * pen.depth),
                penetration: pen.depth,
                normal: pen.normal,
            }
        }
        None => Contact::NONE,
    }
}

/// One stick/slip update of the god-object proxy in the tangent plane.
///
/// The demanded tangential force is the spring between the proxy and the
/// device's projection onto the tangent plane through the proxy. Inside the
/// static cone the proxy holds; outside it the proxy slides toward the
/// device until the spring force equals the dynamic friction bound.
pub fn friction_step(
    state: &HapticDeviceState,
    normal_force: &Vector3<f64>,
    tangential_spring: f64,
    surface: &SurfaceParams,
) -> Result<HapticDeviceState, HapticsError> {
    let fn_mag = normal_force.norm();
    if !(fn_mag > 0.0 && fn_mag.is_finite()) {
        return Err(HapticsError::NotInContact);
    }
    if !(tangential_spring >= 0.0 && tangential_spring.is_finite()) {
        return Err(HapticsError::InvalidSpring);
    }
    let n = normal_force / fn_mag;
    let offset = state.position - state.proxy;
    let projection = state.position - n * offset.dot(&n);
    let stretch = projection - state.proxy;
    let demanded = stretch * tangential_spring;

    let mut next = *state;
    let tangential = if demanded.norm() <= surface.static_friction * fn_mag {
        next.sticking = true;
        -demanded
    } else {
        next.sticking = false;
        let slip = surface.dynamic_friction * fn_mag;
        let dir = stretch / stretch.norm();
        next.proxy = projection - dir * (slip / tangential_spring);
        -dir * slip
    };
    next.output_force = normal_force + tangential;
    Ok(next)
}

/// Per-tick output of the servo loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub state: HapticDeviceState,
    pub contact: Contact,
    /// Tangential force before the device force limit is applied.
    pub tangential_force: Vector3<f64>,
}

/// A touchable surface in the haptic scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Touchable {
    pub shape: PlacedShape,
    pub surface: SurfaceParams,
}

/// The 1 kHz force-rendering loop: calibration, device limits, penalty
/// contact against the deepest touched surface, and proxy friction.
#[derive(Debug, Clone)]
pub struct HapticRenderer {
    pub config: HapticDeviceConfig,
    pub touchables: Vec<Touchable>,
    /// Tangential proxy spring, N/m. `None` uses each surface's effective
    /// stiffness.
    pub tangential_spring: Option<f64>,
    state: HapticDeviceState,
    in_contact: Option<usize>,
    tick: u64,
}

impl HapticRenderer {
    pub fn new(
        config: HapticDeviceConfig,
        touchables: Vec<Touchable>,
    ) -> Result<Self, HapticsError> {
        config.validate()?;
        for t in &touchables {
            t.surface.validate()?;
        }
        let start = constrain_position(&config.workspace.center(), &config);
        Ok(HapticRenderer {
            config,
            touchables,
            tangential_spring: None,
            state: HapticDeviceState::at(start),
            in_contact: None,
            tick: 0,
        })
    }

    pub fn state(&self) -> &HapticDeviceState {
        &self.state
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    /// One servo tick from a raw device reading.
    pub fn tick(&mut self, raw: &Vector3<f64>) -> TickRecord {
        let world = calibrate_position(raw, &self.config.calibration);
        self.step(*raw, world)
    }

    /// One servo tick from a position already in world coordinates.
    pub fn tick_world(&mut self, world: &Vector3<f64>) -> TickRecord {
        self.step(*world, *world)
    }

    fn step(&mut self, raw: Vector3<f64>, world: Vector3<f64>) -> TickRecord {
        self.tick += 1;
        let position = constrain_position(&world, &self.config);

        let mut best: Option<(usize, Contact)> = None;
        for (i, t) in self.touchables.iter().enumerate() {
            let c = contact_force(&position, &t.shape, &t.surface, &self.config);
            if c.in_contact() && best.is_none_or(|(_, b)| c.penetration > b.penetration) {
                best = Some((i, c));
            }
        }

        let mut state = HapticDeviceState {
            raw_position: raw,
            position,
            ..self.state
        };
        let (contact, tangential) = match best {
            Some((i, contact)) if contact.normal_force.norm() == 0.0 => {
                // Zero-stiffness surface: touched but no force to resist sliding.
                self.in_contact = Some(i);
                state.proxy = position + contact.normal * contact.penetration;
                state.sticking = false;
                state.output_force = Vector3::zeros();
                (contact, Vector3::zeros())
            }
            Some((i, contact)) => {
                if self.in_contact != Some(i) {
                    // Touch-down: the proxy starts on the surface above the device.
                    state.proxy = position + contact.normal * contact.penetration;
                }
                self.in_contact = Some(i);
                let surface = self.touchables[i].surface;
                let spring = self
                    .tangential_spring
                    .unwrap_or_else(|| self.config.effective_stiffness(&surface));
                let next = friction_step(&state, &contact.normal_force, spring, &surface)
                    .expect("contact has a non-zero normal force");
                let tangential = next.output_force - contact.normal_force;
                state = next;
                (contact, tangential)
            }
            None => {
                self.in_contact = None;
                state.proxy = position;
                state.sticking = false;
                state.output_force = Vector3::zeros();
                (Contact::NONE, Vector3::zeros())
            }
        };
        state.output_force = clamp_force(&state.output_force, self.config.max_force);
        self.state = state;
        TickRecord {
            state,
            contact,
            tangential_force: tangential,
        }
    }

    /// Replays raw device samples, one tick per sample.
    pub fn replay(&mut self, trajectory: &Trajectory) -> Vec<TickRecord> {
        trajectory
            .samples
            .iter()
            .map(|s| self.tick(&s.position))
            .collect()
    }
}

/// A device trajectory: one sample per servo tick.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Vector3<f64>,
}

impl Trajectory {
    /// Parses `t x y z` lines. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, HapticsError> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |message: String| HapticsError::BadTrajectory {
                line: i + 1,
                message,
            };
            let values = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| bad(format!("not a number: {tok:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let [t, x, y, z] = values[..] else {
                return Err(bad(format!("expected 4 values, found {}", values.len())));
            };
            if samples.last().is_some_and(|s: &TrajectorySample| t < s.t) {
                return Err(bad("time goes backwards".into()));
            }
            samples.push(TrajectorySample {
                t,
                position: Vector3::new(x, y, z),
            });
        }
        Ok(Trajectory { samples })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                s.t, s.position.x, s.position.y, s.position.z
            );
        }
        out
    }

    /// Samples at the servo rate from a position function of time.
    pub fn sampled(ticks: usize, f: impl Fn(f64) -> Vector3<f64>) -> Self {
        Trajectory {
            samples: (0..ticks)
                .map(|i| {
                    let t = i as f64 * SERVO_DT;
                    TrajectorySample { t, position: f(t) }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    /// Lateral motion over the surface: texture.
    Stroke,
    /// Pushing into the surface: firmness.
    Press,
    /// Tracing the outline: form.
    ContourFollow,
    /// Closing around the object: volume.
    Enclosure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeReport {
    Stroke {
        tangential_forces: Vec<f64>,
        /// Variance of the tangential force magnitude, N².
        roughness: f64,
    },
    Press {
        /// (penetration m, force N) pairs below the force limit.
        samples: Vec<(f64, f64)>,
        /// Least-squares slope through the origin, N/m.
        firmness: f64,
    },
    ContourFollow {
        points: Vec<Vector3<f64>>,
    },
    Enclosure {
        volume: f64,
        min: Vector3<f64>,
        max: Vector3<f64>,
    },
}

const PROBE_MAX_DEPTH: f64 = 0.01;
const STROKE_TICKS: usize = 200;
const CONTOUR_POINTS: usize = 64;
const ENCLOSURE_CELLS: usize = 32;

/// Runs one of the four exploratory procedures against a single surface
/// through the full force pipeline.
///
/// The shape must fit inside the device workspace; probes start from the
/// shape's local `+y` surface point.
pub fn exploration_probe(
    kind: ProbeKind,
    shape: &PlacedShape,
    surface: &SurfaceParams,
    cfg: &HapticDeviceConfig,
) -> Result<ProbeReport, HapticsError> {
    let touchable = Touchable {
        shape: *shape,
        surface: *surface,
    };
    let mut renderer = HapticRenderer::new(cfg.clone(), vec![touchable])?;
    match kind {
        ProbeKind::Press => press_probe(&mut renderer, shape),
        ProbeKind::Stroke => stroke_probe(&mut renderer, shape),
        ProbeKind::ContourFollow => Ok(ProbeReport::ContourFollow {
            points: contour_probe(&mut renderer, shape),
        }),
        ProbeKind::Enclosure => enclosure_probe(&mut renderer, shape),
    }
}

struct ProbeFrame {
    top: Vector3<f64>,
    up: Vector3<f64>,
    across: Vector3<f64>,
}

fn probe_frame(shape: &PlacedShape) -> ProbeFrame {
    let top_y = match shape.shape {
        Shape::Plane => 0.0,
        s => s.half_extents().y,
    };
    let pose = &shape.pose;
    ProbeFrame {
        top: (pose * Point3::new(0.0, top_y, 0.0)).coords,
        up: pose.rotation * Vector3::y(),
        across: pose.rotation * Vector3::x(),
    }
}

fn max_press_depth(shape: &PlacedShape) -> f64 {
    let h = shape.shape.half_extents();
    PROBE_MAX_DEPTH.min(h.min())
}

/// Pushes in along the inward normal, one resolution step per tick, until
/// the force nears the device limit.
fn press_probe(r: &mut HapticRenderer, shape: &PlacedShape) -> Result<ProbeReport, HapticsError> {
    let frame = probe_frame(shape);
    let step = r.config.position_resolution;
    let limit = max_press_depth(shape);
    let max_force = r.config.max_force;

    let mut samples = Vec::new();
    let mut depth = -2.0 * step;
    while depth <= limit {
        let rec = r.tick_world(&(frame.top - frame.up * depth));
        let force = rec.contact.normal_force.norm();
        if rec.contact.in_contact() {
            if force >= max_force {
                break;
            }
            samples.push((
                rec.contact.penetration,
                rec.state.output_force.dot(&rec.contact.normal),
            ));
            if force >= 0.8 * max_force {
                break;
            }
        }
        depth += step;
    }
    if samples.is_empty() {
        return Err(HapticsError::ProbeFailed(
            "no unsaturated contact sample; resolution too coarse for this stiffness".into(),
        ));
    }
    let sxy: f64 = samples.iter().map(|(d, f)| d * f).sum();
    let sxx: f64 = samples.iter().map(|(d, _)| d * d).sum();
    Ok(ProbeReport::Press {
        samples,
        firmness: sxy / sxx,
    })
}

/// Presses to a moderate load, then drags sideways across the surface.
fn stroke_probe(r: &mut HapticRenderer, shape: &PlacedShape) -> Result<ProbeReport, HapticsError> {
    let frame = probe_frame(shape);
    let step = r.config.position_resolution;
    let limit = max_press_depth(shape);
    let target = 0.3 * r.config.max_force;

    let mut depth = 0.0;
    loop {
        let rec = r.tick_world(&(frame.top - frame.up * depth));
        if rec.contact.normal_force.norm() >= target || depth + step > limit {
            break;
        }
        depth += step;
    }
    let length = match shape.shape {
        Shape::Plane => 0.05,
        s => s.half_extents().x.min(0.05),
    };
    let start = frame.top - frame.up * depth;
    let tangential_forces: Vec<f64> = (1..=STROKE_TICKS)
        .map(|i| {
            let p = start + frame.across * (length * i as f64 / STROKE_TICKS as f64);
            r.tick_world(&p).tangential_force.norm()
        })
        .collect();
    let n = tangential_forces.len() as f64;
    let mean = tangential_forces.iter().sum::<f64>() / n;
    let roughness = tangential_forces
        .iter()
        .map(|f| (f - mean).powi(2))
        .sum::<f64>()
        / n;
    Ok(ProbeReport::Stroke {
        tangential_forces,
        roughness,
    })
}

/// Finds the surface crossing between an outside and an inside point by
/// bisection on contact feedback.
fn bisect_surface(
    r: &mut HapticRenderer,
    outside: Vector3<f64>,
    inside: Vector3<f64>,
) -> Vector3<f64> {
    let (mut lo, mut hi) = (outside, inside);
    let tol = r.config.position_resolution / 4.0;
    while (hi - lo).norm() > tol {
        let mid = (lo + hi) / 2.0;
        if r.tick_world(&mid).contact.in_contact() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo + hi) / 2.0
}

/// Traces the outline in the shape's local x-z plane.
fn contour_probe(r: &mut HapticRenderer, shape: &PlacedShape) -> Vec<Vector3<f64>> {
    let pose = shape.pose;
    match shape.shape {
        Shape::Plane => {
            let up = pose.rotation * Vector3::y();
            (0..CONTOUR_POINTS)
                .map(|i| {
                    let u = -0.05 + 0.1 * i as f64 / (CONTOUR_POINTS - 1) as f64;
                    let on = (pose * Point3::new(u, 0.0, 0.0)).coords;
                    bisect_surface(r, on + up * 0.02, on - up * 0.02)
                })
                .collect()
        }
        s => {
            let reach = s.half_extents().norm() * 1.5;
            let center = pose.translation.vector;
            (0..CONTOUR_POINTS)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / CONTOUR_POINTS as f64;
                    let dir = pose.rotation * Vector3::new(a.cos(), 0.0, a.sin());
                    bisect_surface(r, center + dir * reach, center)
                })
                .collect()
        }
    }
}

/// Closes in from the six local axis directions to find the extents, then
/// sweeps a grid through the enclosed box and counts contacts.
fn enclosure_probe(
    r: &mut HapticRenderer,
    shape: &PlacedShape,
) -> Result<ProbeReport, HapticsError> {
    if !shape.shape.is_bounded() {
        return Err(HapticsError::UnsupportedShape(
            GeometryError::UnsupportedShape("enclosure needs a bounded shape".into()),
        ));
    }
    let pose = shape.pose;
    let center = pose.translation.vector;
    let reach = shape.shape.half_extents().norm() * 1.5;
    let mut min = Vector3::zeros();
    let mut max = Vector3::zeros();
    for axis in 0..3 {
        let mut e = Vector3::zeros();
        e[axis] = 1.0;
        let dir = pose.rotation * e;
        let hi = bisect_surface(r, center + dir * reach, center);
        let lo = bisect_surface(r, center - dir * reach, center);
        max[axis] = (hi - center).dot(&dir);
        min[axis] = (lo - center).dot(&dir);
    }
    let size = max - min;
    let n = ENCLOSURE_CELLS;
    let mut inside = 0usize;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let local = Vector3::new(
                    min.x + size.x * (i as f64 + 0.5) / n as f64,
                    min.y + size.y * (j as f64 + 0.5) / n as f64,
                    min.z + size.z * (k as f64 + 0.5) / n as f64,
                );
                if r.tick_world(&(center + pose.rotation * local))
                    .contact
                    .in_contact()
                {
                    inside += 1;
                }
            }
        }
    }
    let volume = size.x * size.y * size.z * inside as f64 / (n * n * n) as f64;
    Ok(ProbeReport::Enclosure {
        volume,
        min: center + pose.rotation * min,
        max: center + pose.rotation * max,
    })
}
