//! Primitive solids shared by haptic contact and linac collision checking.
//!
//! Local-frame conventions follow X3D: boxes and spheres are centred on the
//! origin, cylinders and capsules run along the local y axis, and a plane is
//! the local `y = 0` plane with its solid side at `y < 0`.

use nalgebra::{Isometry3, Matrix3, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::x3d::{Node, NodeKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),
    #[error("shape dimensions must be positive and finite")]
    InvalidDimensions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Plane,
    Sphere {
        radius: f64,
    },
    Cylinder {
        radius: f64,
        height: f64,
    },
    Box {
        size: [f64; 3],
    },
    /// Segment from `(0, -half_length, 0)` to `(0, half_length, 0)` swept by
    /// `radius`.
    Capsule {
        radius: f64,
        half_length: f64,
    },
}

/// Penetration of a point into a solid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penetration {
    pub depth: f64,
    /// Outward unit normal of the nearest surface feature.
    pub normal: Vector3<f64>,
}

impl Shape {
    pub fn sphere(radius: f64) -> Result<Self, GeometryError> {
        Shape::Sphere { radius }.checked()
    }

    pub fn cylinder(radius: f64, height: f64) -> Result<Self, GeometryError> {
        Shape::Cylinder { radius, height }.checked()
    }

    pub fn cuboid(size: [f64; 3]) -> Result<Self, GeometryError> {
        Shape::Box { size }.checked()
    }

    pub fn capsule(radius: f64, half_length: f64) -> Result<Self, GeometryError> {
        Shape::Capsule {
            radius,
            half_length,
        }
        .checked()
    }

    fn checked(self) -> Result<Self, GeometryError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let valid = match self {
            Shape::Plane => true,
            Shape::Sphere { radius } => ok(radius),
            Shape::Cylinder { radius, height } => ok(radius) && ok(height),
            Shape::Box { size } => size.iter().all(|v| ok(*v)),
            Shape::Capsule {
                radius,
                half_length,
            } => ok(radius) && half_length.is_finite() && half_length >= 0.0,
        };
        if valid {
            Ok(self)
        } else {
            Err(GeometryError::InvalidDimensions)
        }
    }

    /// Converts an X3D geometry node.
    pub fn from_node(node: &Node) -> Result<Self, GeometryError> {
        let f = |name: &str| node.float(name).unwrap_or(0.0);
        match node.kind {
            NodeKind::Sphere => Shape::sphere(f("radius")),
            NodeKind::Cylinder => Shape::cylinder(f("radius"), f("height")),
            NodeKind::Box => Shape::cuboid(node.vec3("size").unwrap_or([0.0; 3])),
            other => Err(GeometryError::UnsupportedShape(other.to_string())),
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, Shape::Plane)
    }

    pub fn volume(&self) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Shape::Plane => f64::INFINITY,
            Shape::Sphere { radius } => 4.0 / 3.0 * PI * radius.powi(3),
            Shape::Cylinder { radius, height } => PI * radius * radius * height,
            Shape::Box { size } => size[0] * size[1] * size[2],
            Shape::Capsule {
                radius,
                half_length,
            } => PI * radius * radius * (2.0 * half_length) + 4.0 / 3.0 * PI * radius.powi(3),
        }
    }

    /// Half extents of the local axis-aligned bounding box.
    pub fn half_extents(&self) -> Vector3<f64> {
        match *self {
            Shape::Plane => Vector3::repeat(f64::INFINITY),
            Shape::Sphere { radius } => Vector3::repeat(radius),
            Shape::Cylinder { radius, height } => Vector3::new(radius, height / 2.0, radius),
            Shape::Box { size } => Vector3::from(size) / 2.0,
            Shape::Capsule {
                radius,
                half_length,
            } => Vector3::new(radius, half_length + radius, radius),
        }
    }

    /// Depth and outward normal when `p` (local frame) is strictly inside.
    pub fn penetration(&self, p: &Point3<f64>) -> Option<Penetration> {
        let (depth, normal) = match *self {
            Shape::Plane => (-p.y, Vector3::y()),
            Shape::Sphere { radius } => {
                let r = p.coords.norm();
                (radius - r, direction_or(p.coords, Vector3::y()))
            }
            Shape::Capsule {
                radius,
                half_length,
            } => {
                let c = Vector3::new(0.0, p.y.clamp(-half_length, half_length), 0.0);
                let d = p.coords - c;
                (radius - d.norm(), direction_or(d, Vector3::x()))
            }
            Shape::Cylinder { radius, height } => {
                let radial = Vector3::new(p.x, 0.0, p.z);
                let side = radius - radial.norm();
                let cap = height / 2.0 - p.y.abs();
                if side <= cap {
                    (side, direction_or(radial, Vector3::x()))
                } else {
                    (cap, Vector3::y() * sign(p.y))
                }
            }
            Shape::Box { size } => {
                let mut best = (f64::INFINITY, Vector3::zeros());
                for axis in 0..3 {
                    let depth = size[axis] / 2.0 - p[axis].abs();
                    if depth < best.0 {
                        let mut n = Vector3::zeros();
                        n[axis] = sign(p[axis]);
                        best = (depth, n);
                    }
                }
                best
            }
        };
        (depth > 0.0).then_some(Penetration { depth, normal })
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        self.penetration(p).is_some()
    }

    /// Support point of the shape's core (the shape minus [`Shape::margin`]).
    fn core_support(&self, d: &Vector3<f64>) -> Point3<f64> {
        match *self {
            Shape::Plane => unreachable!("planes have no support point"),
            Shape::Sphere { .. } => Point3::origin(),
            Shape::Capsule { half_length, .. } => Point3::new(0.0, sign(d.y) * half_length, 0.0),
            Shape::Box { size } => Point3::new(
                sign(d.x) * size[0] / 2.0,
                sign(d.y) * size[1] / 2.0,
                sign(d.z) * size[2] / 2.0,
            ),
            Shape::Cylinder { radius, height } => {
                let radial = Vector3::new(d.x, 0.0, d.z);
                let n = radial.norm();
                let r = if n > 0.0 {
                    radial * (radius / n)
                } else {
                    Vector3::zeros()
                };
                Point3::new(r.x, sign(d.y) * height / 2.0, r.z)
            }
        }
    }

    /// Radius swept around the core.
    fn margin(&self) -> f64 {
        match *self {
            Shape::Sphere { radius } | Shape::Capsule { radius, .. } => radius,
            _ => 0.0,
        }
    }

    /// Support point of the full shape in direction `d` (local frame).
    pub fn support(&self, d: &Vector3<f64>) -> Point3<f64> {
        self.core_support(d) + direction_or(*d, Vector3::zeros()) * self.margin()
    }
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn direction_or(v: Vector3<f64>, fallback: Vector3<f64>) -> Vector3<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        fallback
    }
}

/// Axis-aligned box in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Aabb { min, max }
    }

    /// Cube of half-width `h` around the origin.
    pub fn symmetric(h: f64) -> Self {
        Aabb::new(Vector3::repeat(-h), Vector3::repeat(h))
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| {
            self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] < self.max[i]
        })
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) / 2.0
    }

    pub fn size(&self) -> Vector3<f64> {
        self.max - self.min
    }
}

/// A shape together with its placement in the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedShape {
    pub shape: Shape,
    pub pose: Isometry3<f64>,
}

impl PlacedShape {
    pub fn new(shape: Shape, pose: Isometry3<f64>) -> Self {
        PlacedShape { shape, pose }
    }

    pub fn at_origin(shape: Shape) -> Self {
        PlacedShape::new(shape, Isometry3::identity())
    }

    /// World-frame penetration of a world point.
    pub fn penetration(&self, p: &Point3<f64>) -> Option<Penetration> {
        let local = self.pose.inverse_transform_point(p);
        self.shape.penetration(&local).map(|pen| Penetration {
            depth: pen.depth,
            normal: self.pose.rotation * pen.normal,
        })
    }

    fn world_core_support(&self, d: &Vector3<f64>) -> Point3<f64> {
        let local_d = self.pose.rotation.inverse() * d;
        self.pose * self.shape.core_support(&local_d)
    }

    /// Rotation matrix of the pose, for callers that need the local axes.
    pub fn axes(&self) -> Matrix3<f64> {
        self.pose.rotation.to_rotation_matrix().into_inner()
    }
}

/// Minimum separation between two solids; 0 when they touch or overlap.
pub fn distance(a: &PlacedShape, b: &PlacedShape) -> f64 {
    match (a.shape, b.shape) {
        (Shape::Plane, Shape::Plane) => 0.0,
        (Shape::Plane, _) => plane_distance(a, b),
        (_, Shape::Plane) => plane_distance(b, a),
        _ => {
            let core = gjk_distance(a, b);
            (core - a.shape.margin() - b.shape.margin()).max(0.0)
        }
    }
}

fn plane_distance(plane: &PlacedShape, other: &PlacedShape) -> f64 {
    let n = plane.pose.rotation * Vector3::y();
    let deepest = other.world_core_support(&-n);
    let height = n.dot(&(deepest - plane.pose.translation.vector).coords) - other.shape.margin();
    height.max(0.0)
}

const GJK_MAX_ITERATIONS: usize = 128;
const GJK_REL_TOLERANCE: f64 = 1e-12;

/// Distance between the cores of two bounded convex shapes (GJK).
fn gjk_distance(a: &PlacedShape, b: &PlacedShape) -> f64 {
    let support = |d: &Vector3<f64>| -> Vector3<f64> {
        a.world_core_support(d).coords - b.world_core_support(&-d).coords
    };

    let mut v = support(&Vector3::x());
    let mut simplex: Vec<Vector3<f64>> = vec![v];
    for _ in 0..GJK_MAX_ITERATIONS {
        let vv = v.norm_squared();
        if vv <= 1e-24 {
            return 0.0;
        }
        let w = support(&-v);
        // v is the current closest point; v.w / |v| is a lower bound.
        if vv - v.dot(&w) <= GJK_REL_TOLERANCE * vv || simplex.contains(&w) {
            return vv.sqrt();
        }
        simplex.push(w);
        let (closest, kept) = closest_in_simplex(&simplex);
        if kept.len() == 4 {
            return 0.0;
        }
        simplex = kept;
        if closest.norm_squared() >= vv {
            // No progress; numerical floor reached.
            return vv.sqrt().min(closest.norm());
        }
        v = closest;
    }
    v.norm()
}

/// Closest point to the origin in the convex hull of up to four points,
/// and the minimal subset of points supporting it.
///
/// Every non-empty subset is tried; the closest point lies in the relative
/// interior of exactly one face, and among all faces whose affine projection
/// of the origin has non-negative barycentric weights that face yields the
/// smallest norm.
fn closest_in_simplex(points: &[Vector3<f64>]) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let n = points.len();
    let mut best: Option<(f64, Vector3<f64>, Vec<Vector3<f64>>)> = None;
    for mask in 1u32..(1 << n) {
        let subset: Vec<Vector3<f64>> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| points[i])
            .collect();
        let Some(weights) = affine_projection_weights(&subset) else {
            continue;
        };
        if weights.iter().any(|w| *w < -1e-12) {
            continue;
        }
        let x: Vector3<f64> = subset.iter().zip(&weights).map(|(p, w)| p * *w).sum();
        let d = x.norm_squared();
        if best
            .as_ref()
            .is_none_or(|(bd, _, s)| d < *bd || (d == *bd && subset.len() < s.len()))
        {
            best = Some((d, x, subset));
        }
    }
    let (_, x, subset) = best.expect("single points always project onto themselves");
    (x, subset)
}

/// Barycentric weights of the origin's projection onto the affine hull of
/// `pts`; `None` when the points are affinely dependent.
fn affine_projection_weights(pts: &[Vector3<f64>]) -> Option<Vec<f64>> {
    let p0 = pts[0];
    let k = pts.len() - 1;
    if k == 0 {
        return Some(vec![1.0]);
    }
    let edges: Vec<Vector3<f64>> = pts[1..].iter().map(|p| p - p0).collect();
    let mut gram = nalgebra::DMatrix::<f64>::zeros(k, k);
    let mut rhs = nalgebra::DVector::<f64>::zeros(k);
    for i in 0..k {
        for j in 0..k {
            gram[(i, j)] = edges[i].dot(&edges[j]);
        }
        rhs[i] = -edges[i].dot(&p0);
    }
    let scale = gram.diagonal().max();
    let det = gram.determinant();
    if det.is_nan() || det.abs() <= 1e-18 * scale.powi(k as i32) {
        return None;
    }
    let lambda = gram.lu().solve(&rhs)?;
    let mut weights = Vec::with_capacity(k + 1);
    weights.push(1.0 - lambda.sum());
    weights.extend(lambda.iter().copied());
    Some(weights)
}
