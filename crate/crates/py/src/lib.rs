//! Python bindings. Structured values (configurations, snapshots, reports)
//! cross the boundary as plain dicts and lists using the same JSON layout
//! as the server's wire format.

use std::path::PathBuf;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use webhaptics::dynamics::{step_rigid_body, RigidBodyState, Wrench};
use webhaptics::electrolysis::{census, init_electrolysis, run_to_quiescence};
use webhaptics::haptics::{
    calibrate_position as calibrate, constrain_state as constrain, HapticDeviceConfig,
};
use webhaptics::hydraulics::{self, HydraulicSystem};
use webhaptics::linac::{self, BeamArrangement, LinacConfiguration, LinacGeometry};
use webhaptics::scene::{self, apply_update, FieldUpdate, Matrix4, NodeRef};
use webhaptics::sim::{self, parse_command, CommandError, SimConfig};
use webhaptics::x3d::{self, NodeKind};

type Vec3 = (f64, f64, f64);

fn value_error(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_error)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Accepts either a JSON string or a JSON-compatible Python object.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = match obj.extract::<String>() {
        Ok(s) => s,
        Err(_) => obj
            .py()
            .import("json")?
            .call_method1("dumps", (obj,))?
            .extract()?,
    };
    serde_json::from_str(&text).map_err(value_error)
}

fn vec3(v: Vec3) -> Vector3<f64> {
    Vector3::new(v.0, v.1, v.2)
}

fn tuple3(v: &Vector3<f64>) -> Vec3 {
    (v.x, v.y, v.z)
}

/// A parsed X3D scene.
#[pyclass(name = "Document", module = "webhaptics", from_py_object)]
#[derive(Clone)]
struct PyDocument {
    inner: x3d::Document,
    diagnostics: Vec<x3d::Diagnostic>,
}

#[pymethods]
impl PyDocument {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        let parsed = x3d::parse_x3d(text).map_err(value_error)?;
        Ok(PyDocument {
            inner: parsed.document,
            diagnostics: parsed.diagnostics,
        })
    }

    /// Non-fatal problems found while parsing.
    #[getter]
    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.diagnostics)
    }

    fn to_x3d(&self) -> String {
        x3d::serialize_x3d(&self.inner)
    }

    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    fn defs(&self) -> Vec<String> {
        self.inner.defs().into_keys().collect()
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &x3d::validate(&self.inner))
    }

    /// World-placed primitives, as served to the browser.
    fn primitives<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &sim::primitive_list(&self.inner))
    }

    /// Row-major 4x4 world matrix of the node with the given DEF.
    fn world_transform(&self, def_name: &str) -> PyResult<Vec<f64>> {
        let m = scene::world_transform(&self.inner, &NodeRef::Def(def_name.into()))
            .map_err(value_error)?;
        Ok(scene::matrix_to_row_major(&m).to_vec())
    }

    /// Returns a copy with one field changed and routes propagated.
    /// `value` is a typed field value such as
    /// `{"type": "SFVec3f", "value": [0, 0, 0.1]}`.
    fn with_field(&self, def_name: &str, field: &str, value: &Bound<'_, PyAny>) -> PyResult<Self> {
        let update = FieldUpdate {
            target: NodeRef::Def(def_name.into()),
            field: field.into(),
            value: from_py(value)?,
            tick: 0,
        };
        Ok(PyDocument {
            inner: apply_update(&self.inner, &update).map_err(value_error)?,
            diagnostics: Vec::new(),
        })
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Document(nodes={}, routes={})",
            self.inner.node_count(),
            self.inner.routes.len()
        )
    }
}

/// The fixed-tick simulation that backs the server, driven directly.
#[pyclass(name = "Simulation", module = "webhaptics")]
struct PySimulation {
    inner: sim::Simulation,
}

#[pymethods]
impl PySimulation {
    #[new]
    #[pyo3(signature = (tick_hz = 1000, publish_hz = 30, seed = 0, attachments_dir = None, clearance = 0.0))]
    fn new(
        tick_hz: u32,
        publish_hz: u32,
        seed: u64,
        attachments_dir: Option<PathBuf>,
        clearance: f64,
    ) -> PyResult<Self> {
        if tick_hz == 0 || publish_hz == 0 || publish_hz > tick_hz {
            return Err(PyValueError::new_err("need 0 < publish_hz <= tick_hz"));
        }
        if !(clearance >= 0.0 && clearance.is_finite()) {
            return Err(PyValueError::new_err(
                "clearance must be a non-negative number",
            ));
        }
        let mut inner = sim::Simulation::new(SimConfig {
            tick_hz,
            publish_hz,
            seed,
            clearance,
            ..SimConfig::default()
        });
        if let Some(dir) = attachments_dir {
            inner = inner.with_attachments_dir(dir);
        }
        Ok(PySimulation { inner })
    }

    #[getter]
    fn tick(&self) -> u64 {
        self.inner.tick()
    }

    fn add_scene(&mut self, name: String, doc: &PyDocument) {
        self.inner.add_scene(name, doc.inner.clone());
    }

    fn scene(&self, name: &str) -> Option<PyDocument> {
        self.inner.scene(name).map(|d| PyDocument {
            inner: d.clone(),
            diagnostics: Vec::new(),
        })
    }

    /// Applies a command given as a JSON string or dict. Schema violations
    /// raise ValueError; commands the current state refuses raise
    /// RuntimeError. Either way the state is left unchanged.
    fn command(&mut self, command: &Bound<'_, PyAny>) -> PyResult<()> {
        let text: String = match command.extract::<String>() {
            Ok(s) => s,
            Err(_) => command
                .py()
                .import("json")?
                .call_method1("dumps", (command,))?
                .extract()?,
        };
        let envelope = parse_command(&text).map_err(value_error)?;
        self.inner.apply(&envelope.command).map_err(|e| match e {
            CommandError::Rejected(m) => PyRuntimeError::new_err(m),
            other => value_error(other),
        })
    }

    #[pyo3(signature = (n = 1))]
    fn step(&mut self, n: u64) -> u64 {
        for _ in 0..n {
            self.inner.step();
        }
        self.inner.tick()
    }

    fn publish_due(&self, tick: u64) -> bool {
        self.inner.config.publish_due(tick)
    }

    fn snapshot<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.snapshot())
    }
}

/// A single rigid body under semi-implicit Euler integration.
#[pyclass(name = "RigidBody", module = "webhaptics")]
struct PyRigidBody {
    inner: RigidBodyState,
}

#[pymethods]
impl PyRigidBody {
    /// `inertia` is three principal moments or a row-major 3x3 tensor.
    #[new]
    #[pyo3(signature = (mass, inertia, position = (0.0, 0.0, 0.0)))]
    fn new(mass: f64, inertia: Vec<f64>, position: Vec3) -> PyResult<Self> {
        let tensor = match inertia.len() {
            3 => Matrix3::from_diagonal(&Vector3::new(inertia[0], inertia[1], inertia[2])),
            9 => Matrix3::from_row_slice(&inertia),
            n => {
                return Err(PyValueError::new_err(format!(
                    "inertia needs 3 or 9 values, got {n}"
                )))
            }
        };
        let inner = RigidBodyState::new(vec3(position), UnitQuaternion::identity(), mass, tensor)
            .map_err(value_error)?;
        Ok(PyRigidBody { inner })
    }

    /// Parses the body from the first DynamicTransform in an X3D document.
    #[staticmethod]
    fn from_x3d(doc: &PyDocument) -> PyResult<Self> {
        let node = doc
            .inner
            .root
            .walk()
            .into_iter()
            .map(|(_, n)| n)
            .find(|n| n.kind == NodeKind::DynamicTransform)
            .ok_or_else(|| PyValueError::new_err("document has no DynamicTransform"))?;
        Ok(PyRigidBody {
            inner: RigidBodyState::from_node(node).map_err(value_error)?,
        })
    }

    #[pyo3(signature = (force = (0.0, 0.0, 0.0), torque = (0.0, 0.0, 0.0), dt = 1e-3, steps = 1))]
    fn step(&mut self, force: Vec3, torque: Vec3, dt: f64, steps: u64) -> PyResult<()> {
        let w = Wrench {
            force: vec3(force),
            torque: vec3(torque),
        };
        let mut s = self.inner;
        for _ in 0..steps {
            s = step_rigid_body(&s, &w, dt).map_err(value_error)?;
        }
        self.inner = s;
        Ok(())
    }

    #[getter]
    fn mass(&self) -> f64 {
        self.inner.mass
    }

    #[getter]
    fn position(&self) -> Vec3 {
        tuple3(&self.inner.position)
    }

    #[getter]
    fn velocity(&self) -> Vec3 {
        tuple3(&self.inner.linear_velocity)
    }

    #[getter]
    fn angular_velocity(&self) -> Vec3 {
        tuple3(&self.inner.angular_velocity)
    }

    /// Unit quaternion as (w, x, y, z).
    #[getter]
    fn orientation(&self) -> (f64, f64, f64, f64) {
        let q = self.inner.orientation.quaternion();
        (q.w, q.i, q.j, q.k)
    }

    fn linear_momentum(&self) -> Vec3 {
        tuple3(&self.inner.linear_momentum())
    }

    fn angular_momentum(&self) -> Vec3 {
        tuple3(&self.inner.angular_momentum())
    }

    fn kinetic_energy(&self) -> f64 {
        self.inner.kinetic_energy()
    }
}

/// Applies a row-major 4x4 calibration matrix to a raw device position.
#[pyfunction]
fn calibrate_position(matrix: Vec<f64>, raw: Vec3) -> PyResult<Vec3> {
    if matrix.len() != 16 {
        return Err(PyValueError::new_err(format!(
            "calibration needs 16 values, got {}",
            matrix.len()
        )));
    }
    Ok(tuple3(&calibrate(
        &vec3(raw),
        &Matrix4::from_row_slice(&matrix),
    )))
}

/// Device settings from the first HLHapticsDevice in an X3D document,
/// over the default configuration.
#[pyfunction]
fn device_config<'py>(py: Python<'py>, doc: Option<&PyDocument>) -> PyResult<Bound<'py, PyAny>> {
    let base = HapticDeviceConfig::default();
    let Some(doc) = doc else {
        return to_py(py, &base);
    };
    let node = doc
        .inner
        .root
        .walk()
        .into_iter()
        .map(|(_, n)| n)
        .find(|n| n.kind == NodeKind::HLHapticsDevice)
        .ok_or_else(|| PyValueError::new_err("document has no HLHapticsDevice"))?;
    to_py(
        py,
        &HapticDeviceConfig::from_device_node(node, base).map_err(value_error)?,
    )
}

/// Clamps a position into the workspace grid and a force to the device
/// limit. `config` is a dict as returned by `device_config`.
#[pyfunction]
#[pyo3(signature = (position, force, config = None))]
fn constrain_state(
    position: Vec3,
    force: Vec3,
    config: Option<&Bound<'_, PyAny>>,
) -> PyResult<(Vec3, Vec3)> {
    let cfg: HapticDeviceConfig = match config {
        Some(c) => from_py(c)?,
        None => HapticDeviceConfig::default(),
    };
    let (p, f) = constrain(&vec3(position), &vec3(force), &cfg);
    Ok((tuple3(&p), tuple3(&f)))
}

/// Default linac pose, as a dict accepted by `check_collision`.
#[pyfunction]
fn linac_pose<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &LinacConfiguration::default())
}

#[pyfunction]
#[pyo3(signature = (pose = None, clearance = 0.0))]
fn check_collision<'py>(
    py: Python<'py>,
    pose: Option<&Bound<'py, PyAny>>,
    clearance: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg: LinacConfiguration = match pose {
        Some(p) => from_py(p)?,
        None => LinacConfiguration::default(),
    };
    to_py(
        py,
        &linac::check_collision(&cfg, &LinacGeometry::reference(), clearance),
    )
}

/// Checks a gantry arc from `start` to `stop` degrees in `step` increments.
#[pyfunction]
#[pyo3(signature = (start, stop, step, pose = None, clearance = 0.0))]
fn sweep_gantry_arc<'py>(
    py: Python<'py>,
    start: f64,
    stop: f64,
    step: f64,
    pose: Option<&Bound<'py, PyAny>>,
    clearance: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let base: LinacConfiguration = match pose {
        Some(p) => from_py(p)?,
        None => LinacConfiguration::default(),
    };
    let plan = BeamArrangement::arc(&base, start, stop, step);
    let report = py
        .detach(|| linac::sweep_beam_arrangement(&plan, &LinacGeometry::reference(), clearance))
        .map_err(value_error)?;
    to_py(py, &report)
}

#[pyfunction]
fn list_attachments(dir: PathBuf) -> PyResult<Vec<String>> {
    linac::list_attachments(&dir).map_err(|e| match e {
        linac::LinacError::NotFound(n) => PyKeyError::new_err(n),
        other => value_error(other),
    })
}

#[pyfunction]
fn pressure(force: f64, area: f64) -> PyResult<f64> {
    hydraulics::pressure(force, area).map_err(value_error)
}

#[pyfunction]
fn transmit_force(force: f64, area_in: f64, area_out: f64) -> PyResult<f64> {
    let sys = HydraulicSystem::new(area_in, area_out).map_err(value_error)?;
    Ok(hydraulics::transmit_force(&sys, force))
}

/// Moves the input piston of a fresh press by `displacement` and returns
/// the resulting system state.
#[pyfunction]
fn lift<'py>(
    py: Python<'py>,
    area_in: f64,
    area_out: f64,
    displacement: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let sys = HydraulicSystem::new(area_in, area_out).map_err(value_error)?;
    to_py(
        py,
        &hydraulics::lift_step(&sys, displacement).map_err(value_error)?,
    )
}

/// Runs a powered cell until nothing is left to react and returns the
/// final census with the tick count.
#[pyfunction]
#[pyo3(signature = (molecules, seed = 0, dt = 1e-3, max_ticks = 1_000_000))]
fn run_electrolysis<'py>(
    py: Python<'py>,
    molecules: usize,
    seed: u64,
    dt: f64,
    max_ticks: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let mut start = init_electrolysis(molecules, seed);
    start.powered = true;
    let (end, settled) = py
        .detach(|| run_to_quiescence(&start, dt, max_ticks))
        .map_err(value_error)?;
    #[derive(Serialize)]
    struct Outcome {
        ticks: u64,
        settled: bool,
        census: webhaptics::electrolysis::Census,
    }
    to_py(
        py,
        &Outcome {
            ticks: end.tick,
            settled,
            census: census(&end),
        },
    )
}

#[pymodule(name = "webhaptics")]
fn webhaptics_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDocument>()?;
    m.add_class::<PySimulation>()?;
    m.add_class::<PyRigidBody>()?;
    m.add_function(wrap_pyfunction!(calibrate_position, m)?)?;
    m.add_function(wrap_pyfunction!(device_config, m)?)?;
    m.add_function(wrap_pyfunction!(constrain_state, m)?)?;
    m.add_function(wrap_pyfunction!(linac_pose, m)?)?;
    m.add_function(wrap_pyfunction!(check_collision, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_gantry_arc, m)?)?;
    m.add_function(wrap_pyfunction!(list_attachments, m)?)?;
    m.add_function(wrap_pyfunction!(pressure, m)?)?;
    m.add_function(wrap_pyfunction!(transmit_force, m)?)?;
    m.add_function(wrap_pyfunction!(lift, m)?)?;
    m.add_function(wrap_pyfunction!(run_electrolysis, m)?)?;
    m.add("STANDARD_GRAVITY", hydraulics::STANDARD_GRAVITY)?;
    Ok(())
}
