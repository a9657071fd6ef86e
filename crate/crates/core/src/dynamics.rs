//! Rigid-body motion for `DynamicTransform` nodes.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::rotation_quaternion;
use crate::x3d::{FieldValue, Node, NodeKind, Rotation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),
    #[error("time step must be positive, got {0}")]
    InvalidTimestep(f64),
    #[error("mass must be positive, got {0}")]
    InvalidMass(f64),
    #[error("inertia tensor must be symmetric positive-definite")]
    InvalidInertia,
    #[error("expected a DynamicTransform node, got {0}")]
    NotDynamic(NodeKind),
}

/// Running compensation terms for the linear integrator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Carry {
    velocity: Vector3<f64>,
    position: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub linear_velocity: Vector3<f64>,
    /// World frame.
    pub angular_velocity: Vector3<f64>,
    pub mass: f64,
    /// Body frame.
    pub inertia: Matrix3<f64>,
    #[serde(skip)]
    carry: Carry,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    /// World frame, newtons.
    pub force: Vector3<f64>,
    /// About the centre of mass, world frame.
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub const ZERO: Wrench = Wrench {
        force: Vector3::new(0.0, 0.0, 0.0),
        torque: Vector3::new(0.0, 0.0, 0.0),
    };

    pub fn force(force: Vector3<f64>) -> Self {
        Wrench {
            force,
            torque: Vector3::zeros(),
        }
    }

    pub fn torque(torque: Vector3<f64>) -> Self {
        Wrench {
            force: Vector3::zeros(),
            torque,
        }
    }

    pub fn gravity(mass: f64, g: Vector3<f64>) -> Self {
        Wrench::force(g * mass)
    }

    /// Force applied at a world point, with the torque it produces about
    /// `center`.
    pub fn at_point(force: Vector3<f64>, point: Vector3<f64>, center: Vector3<f64>) -> Self {
        Wrench {
            force,
            torque: (point - center).cross(&force),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.force
            .iter()
            .chain(self.torque.iter())
            .all(|v| v.is_finite())
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench {
            force: self.force + rhs.force,
            torque: self.torque + rhs.torque,
        }
    }
}

fn is_spd(m: &Matrix3<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
        && (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max()
        && m.cholesky().is_some()
}

impl RigidBodyState {
    pub fn new(
        position: Vector3<f64>,
        orientation: UnitQuaternion<f64>,
        mass: f64,
        inertia: Matrix3<f64>,
    ) -> Result<Self, DynamicsError> {
        let s = RigidBodyState {
            position,
            orientation,
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            mass,
            inertia,
            carry: Carry::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn at_rest(mass: f64, inertia: Matrix3<f64>) -> Result<Self, DynamicsError> {
        RigidBodyState::new(Vector3::zeros(), UnitQuaternion::identity(), mass, inertia)
    }

    pub fn with_velocity(mut self, linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        self.linear_velocity = linear;
        self.angular_velocity = angular;
        self.carry = Carry::default();
        self
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(DynamicsError::InvalidMass(self.mass));
        }
        if !is_spd(&self.inertia) {
            return Err(DynamicsError::InvalidInertia);
        }
        let finite = |v: &Vector3<f64>| v.iter().all(|c| c.is_finite());
        if !finite(&self.position)
            || !finite(&self.linear_velocity)
            || !finite(&self.angular_velocity)
        {
            return Err(DynamicsError::NonFiniteInput("state"));
        }
        if !self.orientation.coords.iter().all(|c| c.is_finite()) {
            return Err(DynamicsError::NonFiniteInput("orientation"));
        }
        Ok(())
    }

    /// Reads mass, inertia, pose and velocities from a `DynamicTransform`.
    pub fn from_node(node: &Node) -> Result<Self, DynamicsError> {
        if node.kind != NodeKind::DynamicTransform {
            return Err(DynamicsError::NotDynamic(node.kind));
        }
        let v3 = |name: &str| Vector3::from(node.vec3(name).unwrap_or_default());
        let inertia = match node.field("inertiaTensor") {
            Some(FieldValue::SFMatrix3f(m)) => Matrix3::from_row_slice(m),
            _ => Matrix3::from_diagonal_element(0.1),
        };
        let orientation = node
            .field("rotation")
            .and_then(FieldValue::as_rotation)
            .map(|r| rotation_quaternion(&r))
            .unwrap_or_else(UnitQuaternion::identity);
        let s = RigidBodyState::new(
            v3("translation"),
            orientation,
            node.float("mass").unwrap_or(1.0),
            inertia,
        )?
        .with_velocity(v3("linearVelocity"), v3("angularVelocity"));
        s.validate()?;
        Ok(s)
    }

    /// Writes pose and velocities back into a `DynamicTransform` node.
    pub fn write_to_node(&self, node: &mut Node) {
        let (axis, angle) = match self.orientation.axis_angle() {
            Some((axis, angle)) => ([axis.x, axis.y, axis.z], angle),
            None => ([0.0, 0.0, 1.0], 0.0),
        };
        let rotation = Rotation::new(axis, angle).unwrap_or(Rotation::IDENTITY);
        let to_arr = |v: &Vector3<f64>| [v.x, v.y, v.z];
        for (name, value) in [
            ("translation", FieldValue::SFVec3f(to_arr(&self.position))),
            ("rotation", FieldValue::SFRotation(rotation)),
            (
                "linearVelocity",
                FieldValue::SFVec3f(to_arr(&self.linear_velocity)),
            ),
            (
                "angularVelocity",
                FieldValue::SFVec3f(to_arr(&self.angular_velocity)),
            ),
        ] {
            node.set_field(name, value)
                .expect("DynamicTransform schema");
        }
    }

    pub fn world_inertia(&self) -> Matrix3<f64> {
        let r = self.orientation.to_rotation_matrix();
        r.matrix() * self.inertia * r.matrix().transpose()
    }

    fn world_inertia_inverse(&self) -> Matrix3<f64> {
        let r = self.orientation.to_rotation_matrix();
        let inv = self
            .inertia
            .try_inverse()
            .expect("inertia validated as SPD");
        r.matrix() * inv * r.matrix().transpose()
    }

    pub fn linear_momentum(&self) -> Vector3<f64> {
        self.linear_velocity * self.mass
    }

    pub fn angular_momentum(&self) -> Vector3<f64> {
        self.world_inertia() * self.angular_velocity
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.mass * self.linear_velocity.norm_squared()
            + 0.5 * self.angular_velocity.dot(&self.angular_momentum())
    }
}

/// Compensated accumulation: `sum += x` with the rounding error carried.
fn kahan_add(sum: &mut Vector3<f64>, carry: &mut Vector3<f64>, x: Vector3<f64>) {
    for i in 0..3 {
        let y = x[i] - carry[i];
        let t = sum[i] + y;
        carry[i] = (t - sum[i]) - y;
        sum[i] = t;
    }
}

/// Advances one semi-implicit Euler step.
///
/// Velocity is updated from the force first and the position uses the new
/// velocity. Rotation integrates world angular momentum (`L += τ dt`), takes
/// `ω = I_w⁻¹ L`, and advances the orientation by the quaternion exponential
/// of `ω dt`; the angular velocity is then re-derived for the new
/// orientation so that `L` is carried across the step.
pub fn step_rigid_body(
    s: &RigidBodyState,
    w: &Wrench,
    dt: f64,
) -> Result<RigidBodyState, DynamicsError> {
    if !dt.is_finite() {
        return Err(DynamicsError::NonFiniteInput("dt"));
    }
    if dt <= 0.0 {
        return Err(DynamicsError::InvalidTimestep(dt));
    }
    if !w.is_finite() {
        return Err(DynamicsError::NonFiniteInput("wrench"));
    }
    s.validate()?;

    let mut next = *s;
    kahan_add(
        &mut next.linear_velocity,
        &mut next.carry.velocity,
        w.force * (dt / s.mass),
    );
    kahan_add(
        &mut next.position,
        &mut next.carry.position,
        next.linear_velocity * dt,
    );

    if w.torque == Vector3::zeros() && s.angular_velocity == Vector3::zeros() {
        return Ok(next);
    }
    let momentum = s.angular_momentum() + w.torque * dt;
    let omega = s.world_inertia_inverse() * momentum;
    let q = UnitQuaternion::from_scaled_axis(omega * dt) * s.orientation;
    next.orientation = UnitQuaternion::new_normalize(Quaternion::from(q.coords));
    next.angular_velocity = next.world_inertia_inverse() * momentum;
    if !next
        .position
        .iter()
        .chain(next.angular_velocity.iter())
        .all(|v| v.is_finite())
    {
        return Err(DynamicsError::NonFiniteInput("result"));
    }
    Ok(next)
}
