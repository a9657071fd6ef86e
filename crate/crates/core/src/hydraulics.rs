//! Quasi-static two-piston hydraulics (Pascal's principle) with the stylus
//! bound to the input piston.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::haptics::{constrain_state, HapticDeviceConfig};

pub const STANDARD_GRAVITY: f64 = 9.81;
pub const DEFAULT_STROKE_LIMIT: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydraulicsError {
    #[error("area must be positive, got {0}")]
    NonPositiveArea(f64),
    #[error(
        "piston would leave its stroke: input {piston_in}, output {piston_out}, limit {limit}"
    )]
    StrokeLimitExceeded {
        piston_in: f64,
        piston_out: f64,
        limit: f64,
    },
    #[error("invalid hydraulic system: {0}")]
    InvalidSystem(String),
}

/// The three teaching modules. The stylus drives the input piston in each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HydraulicModule {
    PressureMeasurement,
    #[default]
    HydraulicMachine,
    HydraulicLifting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HydraulicSystem {
    /// m².
    pub area_in: f64,
    pub area_out: f64,
    /// Displacement from rest, positive when pushed in.
    pub piston_in_pos: f64,
    /// Displacement from rest, positive when raised.
    pub piston_out_pos: f64,
    /// kg resting on the output piston.
    pub load_mass: f64,
    /// m³, constant.
    pub fluid_volume: f64,
    /// Both pistons stay within `±stroke_limit`.
    pub stroke_limit: f64,
}

impl Default for HydraulicSystem {
    fn default() -> Self {
        HydraulicSystem {
            area_in: 0.001,
            area_out: 0.01,
            piston_in_pos: 0.0,
            piston_out_pos: 0.0,
            load_mass: 0.0,
            fluid_volume: 0.005,
            stroke_limit: DEFAULT_STROKE_LIMIT,
        }
    }
}

impl HydraulicSystem {
    pub fn new(area_in: f64, area_out: f64) -> Result<Self, HydraulicsError> {
        let s = HydraulicSystem {
            area_in,
            area_out,
            ..HydraulicSystem::default()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_load(mut self, load_mass: f64) -> Self {
        self.load_mass = load_mass;
        self
    }

    pub fn validate(&self) -> Result<(), HydraulicsError> {
        for area in [self.area_in, self.area_out] {
            if !(area > 0.0 && area.is_finite()) {
                return Err(HydraulicsError::NonPositiveArea(area));
            }
        }
        let bad = |m: &str| Err(HydraulicsError::InvalidSystem(m.to_string()));
        if !(self.load_mass >= 0.0 && self.load_mass.is_finite()) {
            return bad("load_mass must be non-negative");
        }
        if !(self.fluid_volume > 0.0 && self.fluid_volume.is_finite()) {
            return bad("fluid_volume must be positive");
        }
        if !(self.stroke_limit > 0.0 && self.stroke_limit.is_finite()) {
            return bad("stroke_limit must be positive");
        }
        if !self.piston_in_pos.is_finite() || !self.piston_out_pos.is_finite() {
            return bad("piston positions must be finite");
        }
        Ok(())
    }

    /// Output displacement matching an input displacement by volume.
    pub fn output_displacement(&self, d_in: f64) -> f64 {
        d_in * self.area_in / self.area_out
    }

    /// `area_in·piston_in − area_out·piston_out`.
    pub fn volume_imbalance(&self) -> f64 {
        self.area_in * self.piston_in_pos - self.area_out * self.piston_out_pos
    }
}

pub fn pressure(force: f64, area: f64) -> Result<f64, HydraulicsError> {
    if area.is_nan() || area <= 0.0 {
        return Err(HydraulicsError::NonPositiveArea(area));
    }
    Ok(force / area)
}

/// Output-piston force for an input force at equal pressure.
pub fn transmit_force(sys: &HydraulicSystem, input_force: f64) -> f64 {
    input_force * sys.area_out / sys.area_in
}

/// Pushes the input piston by `d_in`; the output piston moves by the
/// volume-matched amount.
pub fn lift_step(sys: &HydraulicSystem, d_in: f64) -> Result<HydraulicSystem, HydraulicsError> {
    sys.validate()?;
    let piston_in = sys.piston_in_pos + d_in;
    let piston_out = sys.output_displacement(piston_in);
    let limit = sys.stroke_limit;
    if !piston_in.is_finite() || piston_in.abs() > limit || piston_out.abs() > limit {
        return Err(HydraulicsError::StrokeLimitExceeded {
            piston_in,
            piston_out,
            limit,
        });
    }
    Ok(HydraulicSystem {
        piston_in_pos: piston_in,
        piston_out_pos: piston_out,
        ..*sys
    })
}

/// Force on the stylus needed to hold the load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resistance {
    /// Newtons, before device limits.
    pub required: f64,
    /// What the device actually renders after its force clamp.
    pub delivered: Vector3<f64>,
}

/// `m·g·A_in/A_out`, directed against the push, then passed through the
/// device's force limit. `push_dir` is the world direction that drives the
/// input piston in.
pub fn haptic_resistance(
    sys: &HydraulicSystem,
    gravity: f64,
    push_dir: &Vector3<f64>,
    device_pos: &Vector3<f64>,
    cfg: &HapticDeviceConfig,
) -> Resistance {
    let required = sys.load_mass * gravity * sys.area_in / sys.area_out;
    let dir = push_dir.try_normalize(0.0).unwrap_or_else(|| -Vector3::y());
    let (_, delivered) = constrain_state(device_pos, &(-dir * required), cfg);
    Resistance {
        required,
        delivered,
    }
}
