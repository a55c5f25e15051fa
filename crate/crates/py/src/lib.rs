//! Python bindings: the exponential-integrator kernel and the simulation
//! loop, exposed for scripting and plotting.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nalgebra::{DMatrix, DVector};

use exposim_core::bench::Scenario;
use exposim_core::contact::ContactPointState;
use exposim_core::integrators::{step, IntegratorKind, SimError};
use exposim_core::mechanics::RobotState;
use exposim_core::{compute_integrals, expm_multiply, pade_expm, PadePolicy};

fn policy_from_str(mmm: &str) -> PyResult<PadePolicy> {
    PadePolicy::parse(mmm)
        .ok_or_else(|| PyValueError::new_err(format!("unknown policy `{mmm}` (full or 0..4)")))
}

fn integrator_from_str(name: &str) -> PyResult<IntegratorKind> {
    IntegratorKind::parse(name).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown integrator `{name}` (expo, euler-exp, rk4, euler-imp)"
        ))
    })
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(PyValueError::new_err("expected a rectangular matrix"));
    }
    let m = rows[0].len();
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn sim_err(err: SimError) -> PyErr {
    PyRuntimeError::new_err(err.to_string())
}

/// Matrix exponential e^A (A as a list of rows).
#[pyfunction]
#[pyo3(signature = (a, mmm = "full"))]
fn expm(a: Vec<Vec<f64>>, mmm: &str) -> PyResult<Vec<Vec<f64>>> {
    let a = matrix_from_rows(a)?;
    if a.nrows() != a.ncols() {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let e = pade_expm(&a, policy_from_str(mmm)?).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(matrix_to_rows(&e))
}

/// Product e^A · V without forming the full exponential.
#[pyfunction]
#[pyo3(signature = (a, v, mmm = "full"))]
fn expm_mul(a: Vec<Vec<f64>>, v: Vec<Vec<f64>>, mmm: &str) -> PyResult<Vec<Vec<f64>>> {
    let a = matrix_from_rows(a)?;
    let v = matrix_from_rows(v)?;
    let out = expm_multiply(&a, &v, policy_from_str(mmm)?)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(matrix_to_rows(&out))
}

/// Integrals (∫x, ∫∫x) of ẋ = Ax + b over [0, dt].
#[pyfunction]
#[pyo3(signature = (a, b, x0, dt, mmm = "full"))]
fn integrals(
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    x0: Vec<f64>,
    dt: f64,
    mmm: &str,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let a = matrix_from_rows(a)?;
    let n = a.nrows();
    if b.len() != n || x0.len() != n {
        return Err(PyValueError::new_err("b and x0 must match the size of A"));
    }
    let ints = compute_integrals(
        &a,
        &DVector::from_vec(b),
        &DVector::from_vec(x0),
        dt,
        policy_from_str(mmm)?,
    )
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((
        ints.x_int.iter().copied().collect(),
        ints.x_int2.iter().copied().collect(),
    ))
}

/// Names of the built-in scenarios.
#[pyfunction]
fn scenario_names() -> Vec<String> {
    Scenario::names().iter().map(|s| s.to_string()).collect()
}

/// A stepping context over one of the built-in scenarios.
#[pyclass]
struct Simulation {
    scenario: Scenario,
    state: RobotState,
    contacts: Vec<ContactPointState>,
    time: f64,
}

#[pymethods]
impl Simulation {
    #[new]
    #[pyo3(signature = (scenario, k = None, b = None, mu = None))]
    fn new(scenario: &str, k: Option<f64>, b: Option<f64>, mu: Option<f64>) -> PyResult<Self> {
        let mut scn = Scenario::builtin(scenario)
            .ok_or_else(|| PyValueError::new_err(format!("unknown scenario `{scenario}`")))?;
        let mut contact = scn.contact;
        if let Some(k) = k {
            contact.stiffness = k;
        }
        if let Some(b) = b {
            contact.damping = b;
        }
        if let Some(mu) = mu {
            contact.friction = mu;
        }
        scn = scn.with_contact(contact);
        let state = scn.initial_state.clone();
        let contacts = scn.fresh_contacts();
        Ok(Self {
            scenario: scn,
            state,
            contacts,
            time: 0.0,
        })
    }

    /// Advances one step and returns the wall time of the step in ns.
    #[pyo3(signature = (integrator = "expo", dt = 1e-3, mmm = "full"))]
    fn step(&mut self, integrator: &str, dt: f64, mmm: &str) -> PyResult<u64> {
        let kind = integrator_from_str(integrator)?;
        let policy = policy_from_str(mmm)?;
        let tick_t = (self.time / self.scenario.dt_c).floor() * self.scenario.dt_c;
        let tau = self.scenario.controller.torque(
            tick_t,
            self.scenario.model.as_ref(),
            &self.state,
            &self.contacts,
        );
        let (next, report) = step(
            kind,
            self.scenario.model.as_ref(),
            &mut self.contacts,
            &self.state,
            &tau,
            dt,
            policy,
        )
        .map_err(sim_err)?;
        self.state = next;
        self.time += dt;
        Ok(report.wall_ns)
    }

    /// Advances by `duration` seconds in steps of `dt`.
    #[pyo3(signature = (duration, integrator = "expo", dt = 1e-3, mmm = "full"))]
    fn run(&mut self, duration: f64, integrator: &str, dt: f64, mmm: &str) -> PyResult<()> {
        let n = (duration / dt).round() as usize;
        for _ in 0..n {
            self.step(integrator, dt, mmm)?;
        }
        Ok(())
    }

    #[getter]
    fn t(&self) -> f64 {
        self.time
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.state.q.iter().copied().collect()
    }

    #[getter]
    fn v(&self) -> Vec<f64> {
        self.state.v.iter().copied().collect()
    }

    /// Instantaneous cone-projected contact force per candidate point.
    fn contact_forces(&self) -> Vec<Vec<f64>> {
        let model = self.scenario.model.as_ref();
        let kin = model.contact_kinematics(&self.state.q, &self.state.v);
        self.contacts
            .iter()
            .enumerate()
            .map(|(i, cp)| {
                if cp.active {
                    let f = exposim_core::contact::spring_damper_force(
                        cp,
                        &kin.positions[i],
                        &kin.velocities[i],
                    );
                    let p = exposim_core::contact::project_friction_cone(&f, cp.friction);
                    vec![p.projected.x, p.projected.y, p.projected.z]
                } else {
                    vec![0.0, 0.0, 0.0]
                }
            })
            .collect()
    }

    /// True where a contact point is currently active.
    fn active_contacts(&self) -> Vec<bool> {
        self.contacts.iter().map(|c| c.active).collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Simulation(scenario='{}', t={:.4}, active={})",
            self.scenario.id,
            self.time,
            self.contacts.iter().filter(|c| c.active).count()
        )
    }
}

#[pymodule]
fn exposim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(expm, m)?)?;
    m.add_function(wrap_pyfunction!(expm_mul, m)?)?;
    m.add_function(wrap_pyfunction!(integrals, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_names, m)?)?;
    m.add_class::<Simulation>()?;
    Ok(())
}
