//! Scene model, haptic rendering, rigid-body dynamics and the three
//! interactive simulations (linac collision checking, NaCl electrolysis and
//! hydraulics) behind the web e-learning server.

pub mod dynamics;
pub mod electrolysis;
pub mod geometry;
pub mod haptics;
pub mod hydraulics;
pub mod linac;
pub mod scene;
pub mod sim;
pub mod x3d;

pub use nalgebra::{Matrix3, Point3, UnitQuaternion, Vector3};
