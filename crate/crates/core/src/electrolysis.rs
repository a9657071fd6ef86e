//! Agent-based NaCl electrolysis.
//!
//! Molecules dissociate on seeded exponential timers, ions drift in straight
//! lines to their electrode and neutralize there, and chlorine atoms at the
//! anode pair up into Cl₂ that rises out of the tank.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Aabb;

/// Dissociation rate at speed 1, s⁻¹.
pub const DISSOCIATION_RATE: f64 = 0.5;
/// Ion drift speed at speed 1, m/s.
pub const DRIFT_SPEED: f64 = 0.02;
/// Height above the tank at which evaporated Cl₂ stops rising.
pub const EVAPORATION_HEIGHT: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElectrolysisError {
    #[error("speed must be finite and non-negative, got {0}")]
    InvalidSpeed(f64),
    #[error("time step must be finite and positive, got {0}")]
    InvalidTimestep(f64),
    #[error("{species:?} cannot be in phase {phase:?}")]
    IllegalPhase { species: Species, phase: Phase },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Species {
    NaClMolecule,
    NaIon,
    ClIon,
    NaAtom,
    ClAtom,
    Cl2Molecule,
}

impl Species {
    pub const ALL: [Species; 6] = [
        Species::NaClMolecule,
        Species::NaIon,
        Species::ClIon,
        Species::NaAtom,
        Species::ClAtom,
        Species::Cl2Molecule,
    ];

    pub fn charge(self) -> i32 {
        match self {
            Species::NaIon => 1,
            Species::ClIon => -1,
            _ => 0,
        }
    }

    pub fn na_nuclei(self) -> usize {
        match self {
            Species::NaClMolecule | Species::NaIon | Species::NaAtom => 1,
            _ => 0,
        }
    }

    pub fn cl_nuclei(self) -> usize {
        match self {
            Species::NaClMolecule | Species::ClIon | Species::ClAtom => 1,
            Species::Cl2Molecule => 2,
            _ => 0,
        }
    }

    pub fn is_ion(self) -> bool {
        self.charge() != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Dissolved,
    AtCathode,
    AtAnode,
    Evaporated,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::Dissolved,
        Phase::AtCathode,
        Phase::AtAnode,
        Phase::Evaporated,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub species: Species,
    pub position: Vector3<f64>,
    pub phase: Phase,
    /// Remaining reaction time before a molecule dissociates, seconds at
    /// speed 1. Unused for other species.
    #[serde(default)]
    pub timer: f64,
}

impl Particle {
    pub fn new(
        species: Species,
        position: Vector3<f64>,
        phase: Phase,
    ) -> Result<Self, ElectrolysisError> {
        if phase == Phase::Evaporated && species != Species::Cl2Molecule {
            return Err(ElectrolysisError::IllegalPhase { species, phase });
        }
        Ok(Particle {
            species,
            position,
            phase,
            timer: 0.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrolysisState {
    pub particles: Vec<Particle>,
    pub tank: Aabb,
    pub cathode_pos: Vector3<f64>,
    pub anode_pos: Vector3<f64>,
    pub speed: f64,
    pub tick: u64,
    pub powered: bool,
    /// Electrons taken up by Na⁺ at the cathode so far.
    pub electrons_absorbed: u64,
    /// Electrons given up by Cl⁻ at the anode so far.
    pub electrons_released: u64,
    /// Ions that drifted during the last tick.
    pub migrating: usize,
}

pub fn default_tank() -> Aabb {
    Aabb::new(
        Vector3::new(-0.1, 0.0, -0.05),
        Vector3::new(0.1, 0.15, 0.05),
    )
}

/// `n` undissociated molecules at seeded positions in the default tank.
pub fn init_electrolysis(n_molecules: usize, seed: u64) -> ElectrolysisState {
    let tank = default_tank();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inner = Aabb::new(
        tank.min + Vector3::repeat(0.01),
        tank.max - Vector3::repeat(0.01),
    );
    let particles = (0..n_molecules)
        .map(|_| {
            let position = Vector3::from_fn(|i, _| rng.random_range(inner.min[i]..inner.max[i]));
            // 1 - u lies in (0, 1], so the log is finite.
            let u: f64 = 1.0 - rng.random::<f64>();
            Particle {
                species: Species::NaClMolecule,
                position,
                phase: Phase::Dissolved,
                timer: -u.ln() / DISSOCIATION_RATE,
            }
        })
        .collect();
    let mid_y = (tank.min.y + tank.max.y) / 2.0;
    ElectrolysisState {
        particles,
        tank,
        cathode_pos: Vector3::new(-0.08, mid_y, 0.0),
        anode_pos: Vector3::new(0.08, mid_y, 0.0),
        speed: 1.0,
        tick: 0,
        powered: false,
        electrons_absorbed: 0,
        electrons_released: 0,
        migrating: 0,
    }
}

impl ElectrolysisState {
    pub fn set_speed(&mut self, speed: f64) -> Result<(), ElectrolysisError> {
        if !(speed >= 0.0 && speed.is_finite()) {
            return Err(ElectrolysisError::InvalidSpeed(speed));
        }
        self.speed = speed;
        Ok(())
    }

    pub fn count(&self, species: Species, phase: Phase) -> usize {
        self.particles
            .iter()
            .filter(|p| p.species == species && p.phase == phase)
            .count()
    }

    pub fn species_count(&self, species: Species) -> usize {
        self.particles
            .iter()
            .filter(|p| p.species == species)
            .count()
    }

    pub fn na_nuclei(&self) -> usize {
        self.particles.iter().map(|p| p.species.na_nuclei()).sum()
    }

    pub fn cl_nuclei(&self) -> usize {
        self.particles.iter().map(|p| p.species.cl_nuclei()).sum()
    }

    /// `(#Na⁺ − #Cl⁻) + (absorbed − released)`; zero in every reachable
    /// state that started neutral.
    pub fn charge_balance(&self) -> i64 {
        let ions: i64 = self
            .particles
            .iter()
            .map(|p| p.species.charge() as i64)
            .sum();
        ions + self.electrons_absorbed as i64 - self.electrons_released as i64
    }

    /// Nothing left to react, drift or rise.
    pub fn is_quiescent(&self) -> bool {
        let top = self.tank.max.y + EVAPORATION_HEIGHT;
        self.particles.iter().all(|p| match p.species {
            Species::NaClMolecule | Species::NaIon | Species::ClIon => false,
            Species::Cl2Molecule => p.position.y >= top,
            _ => true,
        }) && self.count(Species::ClAtom, Phase::AtAnode) < 2
    }
}

/// Moves `from` toward `to` by at most `step`; true on arrival.
fn drift(from: &mut Vector3<f64>, to: &Vector3<f64>, step: f64) -> bool {
    let gap = to - *from;
    let d = gap.norm();
    if d <= step {
        *from = *to;
        true
    } else {
        *from += gap * (step / d);
        false
    }
}

/// Advances one tick. Unpowered tanks only advance the tick counter.
pub fn step_electrolysis(
    s: &ElectrolysisState,
    dt: f64,
) -> Result<ElectrolysisState, ElectrolysisError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ElectrolysisError::InvalidTimestep(dt));
    }
    let mut next = s.clone();
    next.tick += 1;
    next.migrating = 0;
    if !s.powered {
        return Ok(next);
    }
    let elapsed = dt * s.speed;
    let step = DRIFT_SPEED * s.speed * dt;

    let mut particles = Vec::with_capacity(s.particles.len() + 4);
    let mut fresh_ions = Vec::new();
    for p in &s.particles {
        let mut p = *p;
        match p.species {
            Species::NaClMolecule => {
                p.timer -= elapsed;
                if p.timer <= 0.0 {
                    p.species = Species::NaIon;
                    p.timer = 0.0;
                    fresh_ions.push(Particle {
                        species: Species::ClIon,
                        ..p
                    });
                }
            }
            Species::NaIon | Species::ClIon if step > 0.0 => {
                next.migrating += 1;
                let (target, atom, phase) = if p.species == Species::NaIon {
                    (s.cathode_pos, Species::NaAtom, Phase::AtCathode)
                } else {
                    (s.anode_pos, Species::ClAtom, Phase::AtAnode)
                };
                if drift(&mut p.position, &target, step) {
                    if p.species == Species::NaIon {
                        next.electrons_absorbed += 1;
                    } else {
                        next.electrons_released += 1;
                    }
                    p.species = atom;
                    p.phase = phase;
                }
            }
            Species::Cl2Molecule if p.phase == Phase::Evaporated => {
                let top = s.tank.max.y + EVAPORATION_HEIGHT;
                p.position.y = (p.position.y + step).min(top);
            }
            _ => {}
        }
        particles.push(p);
    }
    particles.extend(fresh_ions);

    // Pair chlorine atoms at the anode in list order.
    let mut waiting: Option<usize> = None;
    let mut paired = vec![false; particles.len()];
    let mut formed = Vec::new();
    for (i, p) in particles.iter().enumerate() {
        if p.species != Species::ClAtom || p.phase != Phase::AtAnode {
            continue;
        }
        match waiting.take() {
            None => waiting = Some(i),
            Some(j) => {
                paired[i] = true;
                paired[j] = true;
                formed.push(Particle {
                    species: Species::Cl2Molecule,
                    position: s.anode_pos,
                    phase: Phase::Evaporated,
                    timer: 0.0,
                });
            }
        }
    }
    next.particles = particles
        .into_iter()
        .zip(paired)
        .filter_map(|(p, gone)| (!gone).then_some(p))
        .chain(formed)
        .collect();
    Ok(next)
}

/// Steps until quiescent or `max_ticks` have elapsed; returns the final
/// state and whether it is quiescent.
pub fn run_to_quiescence(
    s: &ElectrolysisState,
    dt: f64,
    max_ticks: u64,
) -> Result<(ElectrolysisState, bool), ElectrolysisError> {
    let mut state = s.clone();
    for _ in 0..max_ticks {
        if state.is_quiescent() {
            return Ok((state, true));
        }
        state = step_electrolysis(&state, dt)?;
    }
    let done = state.is_quiescent();
    Ok((state, done))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CensusEntry {
    pub species: Species,
    pub phase: Phase,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    /// Non-zero (species, phase) counts in declaration order.
    pub counts: Vec<CensusEntry>,
    pub na_nuclei: usize,
    pub cl_nuclei: usize,
    pub bulb_intensity: f64,
}

impl Census {
    pub fn get(&self, species: Species, phase: Phase) -> usize {
        self.counts
            .iter()
            .find(|e| e.species == species && e.phase == phase)
            .map_or(0, |e| e.count)
    }

    pub fn species_total(&self, species: Species) -> usize {
        self.counts
            .iter()
            .filter(|e| e.species == species)
            .map(|e| e.count)
            .sum()
    }
}

/// Counts plus the bulb indicator: ions that migrated in the last tick per
/// Na/Cl nucleus pair, clamped to `[0, 1]`.
pub fn census(s: &ElectrolysisState) -> Census {
    let mut counts = Vec::new();
    for species in Species::ALL {
        for phase in Phase::ALL {
            let count = s.count(species, phase);
            if count > 0 {
                counts.push(CensusEntry {
                    species,
                    phase,
                    count,
                });
            }
        }
    }
    let pairs = s.na_nuclei().min(s.cl_nuclei());
    let bulb_intensity = if pairs == 0 {
        0.0
    } else {
        (s.migrating as f64 / pairs as f64).clamp(0.0, 1.0)
    };
    Census {
        counts,
        na_nuclei: s.na_nuclei(),
        cl_nuclei: s.cl_nuclei(),
        bulb_intensity,
    }
}
