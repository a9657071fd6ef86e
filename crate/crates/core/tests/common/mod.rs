//! Brute-force collision oracle: dense surface samples, an analytic
//! inside test written from scratch, and a hashed grid for near pairs.

#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

use nalgebra::{Isometry3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use webhaptics::geometry::Shape;
use webhaptics::linac::{Frame, LinacConfiguration, LinacGeometry};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap()
}

pub fn corpus() -> Vec<(String, String)> {
    let mut files: Vec<_> = std::fs::read_dir(fixture("x3d"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "x3d"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(&p).unwrap(),
            )
        })
        .collect()
}

pub fn surface_area(shape: &Shape) -> f64 {
    match *shape {
        Shape::Sphere { radius } => 4.0 * PI * radius * radius,
        Shape::Cylinder { radius, height } => TAU * radius * height + TAU * radius * radius,
        Shape::Box { size: [a, b, c] } => 2.0 * (a * b + b * c + a * c),
        Shape::Capsule {
            radius,
            half_length,
        } => TAU * radius * 2.0 * half_length + 4.0 * PI * radius * radius,
        Shape::Plane => f64::INFINITY,
    }
}

fn unit_sphere(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..TAU);
    let r = (1.0 - z * z).sqrt();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Area-uniform samples of the local surface (cylinders and capsules run
/// along local y).
pub fn sample_local(shape: &Shape, n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3<f64>> {
    (0..n)
        .map(|_| match *shape {
            Shape::Sphere { radius } => Point3::from(unit_sphere(rng) * radius),
            Shape::Cylinder { radius, height } => {
                let side = TAU * radius * height;
                let cap = PI * radius * radius;
                let pick = rng.random_range(0.0..side + 2.0 * cap);
                if pick < side {
                    let a: f64 = rng.random_range(0.0..TAU);
                    let y = rng.random_range(-height / 2.0..height / 2.0);
                    Point3::new(radius * a.cos(), y, radius * a.sin())
                } else {
                    let r = radius * rng.random::<f64>().sqrt();
                    let a: f64 = rng.random_range(0.0..TAU);
                    let y = if pick < side + cap {
                        height / 2.0
                    } else {
                        -height / 2.0
                    };
                    Point3::new(r * a.cos(), y, r * a.sin())
                }
            }
            Shape::Box { size: [a, b, c] } => {
                let faces = [b * c, b * c, a * c, a * c, a * b, a * b];
                let mut pick = rng.random_range(0.0..faces.iter().sum::<f64>());
                let mut face = 0;
                while pick >= faces[face] && face < 5 {
                    pick -= faces[face];
                    face += 1;
                }
                let h = Vector3::new(a, b, c) / 2.0;
                let mut p = Vector3::new(
                    rng.random_range(-h.x..h.x),
                    rng.random_range(-h.y..h.y),
                    rng.random_range(-h.z..h.z),
                );
                let axis = face / 2;
                p[axis] = if face % 2 == 0 { h[axis] } else { -h[axis] };
                Point3::from(p)
            }
            Shape::Capsule {
                radius,
                half_length,
            } => {
                let side = TAU * radius * 2.0 * half_length;
                let caps = 4.0 * PI * radius * radius;
                if rng.random_range(0.0..side + caps) < side {
                    let a: f64 = rng.random_range(0.0..TAU);
                    let y = rng.random_range(-half_length..half_length);
                    Point3::new(radius * a.cos(), y, radius * a.sin())
                } else {
                    let d = unit_sphere(rng) * radius;
                    let y = if d.y >= 0.0 {
                        half_length
                    } else {
                        -half_length
                    };
                    Point3::new(d.x, d.y + y, d.z)
                }
            }
            Shape::Plane => unreachable!("planes are unbounded"),
        })
        .collect()
}

/// Strictly inside the local solid.
pub fn inside_local(shape: &Shape, p: &Point3<f64>) -> bool {
    match *shape {
        Shape::Sphere { radius } => p.coords.norm() < radius,
        Shape::Cylinder { radius, height } => p.y.abs() < height / 2.0 && p.x.hypot(p.z) < radius,
        Shape::Box { size: [a, b, c] } => {
            p.x.abs() < a / 2.0 && p.y.abs() < b / 2.0 && p.z.abs() < c / 2.0
        }
        Shape::Capsule {
            radius,
            half_length,
        } => {
            let y = p.y.clamp(-half_length, half_length);
            (p.coords - Vector3::new(0.0, y, 0.0)).norm() < radius
        }
        Shape::Plane => p.y < 0.0,
    }
}

pub struct SampledPart {
    pub name: String,
    pub frame: Frame,
    pub shape: Shape,
    pub pose: Isometry3<f64>,
    pub points: Vec<Point3<f64>>,
    pub spacing: f64,
}

impl SampledPart {
    fn inside(&self, p: &Point3<f64>) -> bool {
        inside_local(&self.shape, &self.pose.inverse_transform_point(p))
    }
}

pub fn sample_geometry(
    cfg: &LinacConfiguration,
    geo: &LinacGeometry,
    per_part: usize,
    seed: u64,
) -> Vec<SampledPart> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    geo.all_parts()
        .map(|part| {
            let pose = part.placed(cfg).pose;
            let points = sample_local(&part.shape, per_part, &mut rng)
                .into_iter()
                .map(|p| pose * p)
                .collect();
            SampledPart {
                name: part.name.clone(),
                frame: part.frame,
                shape: part.shape,
                pose,
                points,
                spacing: (surface_area(&part.shape) / per_part as f64).sqrt(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleVerdict {
    /// Some sample of one solid lies inside the other.
    Penetrating,
    /// Closest sample pair is `d` apart with `d < tol`; too close to call.
    Near(f64),
    /// No samples within `tol`.
    Separated,
}

/// Sampled verdict for one pair; `tol` is twice the coarser sample spacing.
pub fn oracle_pair(a: &SampledPart, b: &SampledPart) -> (OracleVerdict, f64) {
    let tol = 2.0 * a.spacing.max(b.spacing);
    // Only samples inside the other cloud's padded bounding box can matter.
    let (a_box, b_box) = (bounds(&a.points, tol), bounds(&b.points, tol));
    let a_near: Vec<&Point3<f64>> = a.points.iter().filter(|p| in_bounds(&b_box, p)).collect();
    let b_near: Vec<&Point3<f64>> = b.points.iter().filter(|p| in_bounds(&a_box, p)).collect();
    if a_near.iter().any(|p| b.inside(p)) || b_near.iter().any(|p| a.inside(p)) {
        return (OracleVerdict::Penetrating, tol);
    }
    let key = |p: &Point3<f64>| {
        (
            (p.x / tol).floor() as i64,
            (p.y / tol).floor() as i64,
            (p.z / tol).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in b_near.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let mut best = f64::INFINITY;
    for p in a_near {
        let (x, y, z) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(idx) = grid.get(&(x + dx, y + dy, z + dz)) {
                        for &i in idx {
                            best = best.min((b_near[i] - p).norm());
                        }
                    }
                }
            }
        }
    }
    if best < tol {
        (OracleVerdict::Near(best), tol)
    } else {
        (OracleVerdict::Separated, tol)
    }
}

fn bounds(points: &[Point3<f64>], pad: f64) -> (Vector3<f64>, Vector3<f64>) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(&p.coords);
        hi = hi.sup(&p.coords);
    }
    (lo - Vector3::repeat(pad), hi + Vector3::repeat(pad))
}

fn in_bounds((lo, hi): &(Vector3<f64>, Vector3<f64>), p: &Point3<f64>) -> bool {
    (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i])
}

fn linked(a: Frame, b: Frame) -> bool {
    a == b
        || matches!(
            (a, b),
            (Frame::Gantry, Frame::Collimator) | (Frame::Collimator, Frame::Gantry)
        )
}

pub struct OracleReport {
    pub penetrating: bool,
    /// Pairs whose sampled gap is below tolerance without penetration.
    pub near: Vec<(String, String, f64)>,
}

pub fn oracle_collision(
    cfg: &LinacConfiguration,
    geo: &LinacGeometry,
    per_part: usize,
    seed: u64,
) -> OracleReport {
    let parts = sample_geometry(cfg, geo, per_part, seed);
    let mut penetrating = false;
    let mut near = Vec::new();
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            if linked(parts[i].frame, parts[j].frame) {
                continue;
            }
            match oracle_pair(&parts[i], &parts[j]).0 {
                OracleVerdict::Penetrating => penetrating = true,
                OracleVerdict::Near(d) => {
                    near.push((parts[i].name.clone(), parts[j].name.clone(), d))
                }
                OracleVerdict::Separated => {}
            }
        }
    }
    OracleReport { penetrating, near }
}

/// Seeded random configuration inside the default limits.
pub fn random_config(rng: &mut ChaCha8Rng) -> LinacConfiguration {
    let mut c = LinacConfiguration::default();
    c.gantry_deg = rng.random_range(0.0..360.0);
    c.collimator_deg = rng.random_range(0.0..360.0);
    c.couch_rotation_deg = rng.random_range(0.0..360.0);
    c.couch_vertical_m =
        rng.random_range(c.limits.couch_vertical.min..=c.limits.couch_vertical.max);
    c.couch_longitudinal_m =
        rng.random_range(c.limits.couch_longitudinal.min..=c.limits.couch_longitudinal.max);
    c.couch_lateral_m = rng.random_range(c.limits.couch_lateral.min..=c.limits.couch_lateral.max);
    c
}
