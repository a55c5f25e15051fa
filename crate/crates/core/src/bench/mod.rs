//! Ground-truth generation, the local-error metric, speed/accuracy and
//! stiffness sweeps, and the stability search.
//!
//! Accuracy is measured as a *local* integration error over one controller
//! step: at every controller tick the integrator under test restarts from
//! the ground-truth state, runs dt_c/Δt steps, and the ∞-norm of the state
//! difference at the next tick is recorded. Ground truth comes from the same
//! integrator at Δt = 1/64 ms. Stability runs the whole scenario without
//! resets and asks that the velocity stay bounded.

mod balance;
mod scenario;

pub use balance::{dlqr, discretized_stance_linearization, hopper_stance_equilibrium, hopper_stance_feedback};
pub use scenario::{ContactParams, Controller, ReferenceProgram, Scenario};

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DVector, Vector3};
use thiserror::Error;

use crate::contact::{project_friction_cone, spring_damper_force, ContactPointState};
use crate::expm::PadePolicy;
use crate::integrators::{step, IntegratorKind, SimError, StepReport};
use crate::mechanics::{Model, RobotState};

/// Ground-truth integration step: 1/64 ms.
pub const GROUND_TRUTH_DT: f64 = 1.0e-3 / 64.0;

/// A run is declared unstable once ‖v‖∞ reaches this bound (far above any
/// physical velocity in the scenarios).
pub const STABILITY_VELOCITY_BOUND: f64 = 1e3;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("ground truth diverged for {scenario}/{integrator} at t = {time:.4} s")]
    GroundTruthDiverged {
        scenario: String,
        integrator: String,
        time: f64,
    },
    #[error("integration step {dt} s does not divide the controller step {dt_c} s")]
    StepMismatch { dt: f64, dt_c: f64 },
    #[error("stability search non-monotone: dt = {dt} s unstable below a stable step")]
    NonMonotoneStability { dt: f64 },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Simulation state recorded at a controller tick.
#[derive(Debug, Clone)]
pub struct TickRecord {
    pub time: f64,
    pub state: RobotState,
    pub contacts: Vec<ContactPointState>,
}

/// One benchmark measurement, mirroring the CSV schema.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub scenario: String,
    pub integrator: String,
    pub mmm: String,
    pub dt_ms: f64,
    pub dt_c_ms: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub friction: f64,
    pub err_mean: f64,
    pub err_max: f64,
    pub ns_per_step: f64,
    pub realtime_factor: f64,
}

/// Number of integration steps per controller tick, or `None` when dt does
/// not divide dt_c.
pub fn steps_per_tick(dt_c: f64, dt: f64) -> Option<usize> {
    let ratio = dt_c / dt;
    let rounded = ratio.round();
    (rounded >= 1.0 && (ratio - rounded).abs() <= 1e-9 * ratio).then_some(rounded as usize)
}

fn bounded(state: &RobotState) -> bool {
    state.is_finite() && state.v.amax() < STABILITY_VELOCITY_BOUND
}

/// Full continuous run at the given step, recording every controller tick.
/// `diverged_at` is set if the state left the stability bound (the records
/// stop there).
pub struct RunOutcome {
    pub ticks: Vec<TickRecord>,
    pub diverged_at: Option<f64>,
}

pub fn run_recorded(
    scenario: &Scenario,
    integrator: IntegratorKind,
    policy: PadePolicy,
    dt: f64,
) -> Result<RunOutcome, BenchError> {
    let per_tick = steps_per_tick(scenario.dt_c, dt).ok_or(BenchError::StepMismatch {
        dt,
        dt_c: scenario.dt_c,
    })?;
    let n_ticks = (scenario.duration / scenario.dt_c).round() as usize;
    let model = scenario.model.as_ref();

    let mut state = scenario.initial_state.clone();
    let mut contacts = scenario.fresh_contacts();
    let mut ticks = Vec::with_capacity(n_ticks + 1);
    ticks.push(TickRecord {
        time: 0.0,
        state: state.clone(),
        contacts: contacts.clone(),
    });

    for tick in 0..n_ticks {
        let t = tick as f64 * scenario.dt_c;
        let tau = scenario.controller.torque(t, model, &state, &contacts);
        for sub in 0..per_tick {
            match step(integrator, model, &mut contacts, &state, &tau, dt, policy) {
                Ok((next, _)) if bounded(&next) => state = next,
                _ => {
                    return Ok(RunOutcome {
                        ticks,
                        diverged_at: Some(t + sub as f64 * dt),
                    });
                }
            }
        }
        ticks.push(TickRecord {
            time: (tick + 1) as f64 * scenario.dt_c,
            state: state.clone(),
            contacts: contacts.clone(),
        });
    }
    Ok(RunOutcome {
        ticks,
        diverged_at: None,
    })
}

/// Ground-truth trajectory: the integrator under analysis at Δt = 1/64 ms,
/// sampled at controller ticks. Torques are held constant over each tick.
pub fn ground_truth(
    scenario: &Scenario,
    integrator: IntegratorKind,
    policy: PadePolicy,
) -> Result<Vec<TickRecord>, BenchError> {
    let outcome = run_recorded(scenario, integrator, policy, GROUND_TRUTH_DT)?;
    match outcome.diverged_at {
        Some(time) => Err(BenchError::GroundTruthDiverged {
            scenario: scenario.id.clone(),
            integrator: integrator.name().to_string(),
            time,
        }),
        None => Ok(outcome.ticks),
    }
}

/// Local errors e(t) at the given ticks (1-based indices into `gt`): restart
/// from the ground-truth state one controller step earlier, integrate, and
/// take the ∞-norm of the state difference. Diverged sub-runs yield +∞.
/// Also returns the stepping wall time and the number of steps taken.
pub fn local_errors_at_ticks(
    scenario: &Scenario,
    gt: &[TickRecord],
    integrator: IntegratorKind,
    policy: PadePolicy,
    dt: f64,
    tick_indices: &[usize],
) -> Result<(Vec<f64>, u64, u64), BenchError> {
    let per_tick = steps_per_tick(scenario.dt_c, dt).ok_or(BenchError::StepMismatch {
        dt,
        dt_c: scenario.dt_c,
    })?;
    let model = scenario.model.as_ref();
    let mut errors = Vec::with_capacity(tick_indices.len());
    let mut wall_ns = 0u64;
    let mut steps = 0u64;

    for &i in tick_indices {
        assert!(i >= 1 && i < gt.len());
        let start = &gt[i - 1];
        let mut state = start.state.clone();
        let mut contacts = start.contacts.clone();
        let tau = scenario.controller.torque(start.time, model, &state, &contacts);

        let t0 = Instant::now();
        let mut failed = false;
        for _ in 0..per_tick {
            match step(integrator, model, &mut contacts, &state, &tau, dt, policy) {
                Ok((next, _)) if bounded(&next) => state = next,
                _ => {
                    failed = true;
                    break;
                }
            }
        }
        wall_ns += t0.elapsed().as_nanos() as u64;
        steps += per_tick as u64;

        if failed {
            errors.push(f64::INFINITY);
        } else {
            errors.push(model.state_difference(&gt[i].state, &state).amax());
        }
    }
    Ok((errors, wall_ns, steps))
}

/// Local errors at every controller tick.
pub fn local_errors(
    scenario: &Scenario,
    gt: &[TickRecord],
    integrator: IntegratorKind,
    policy: PadePolicy,
    dt: f64,
) -> Result<Vec<f64>, BenchError> {
    let ticks: Vec<usize> = (1..gt.len()).collect();
    local_errors_at_ticks(scenario, gt, integrator, policy, dt, &ticks).map(|(e, _, _)| e)
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn max(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |a, &b| a.max(b))
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

fn make_record(
    scenario: &Scenario,
    integrator: &str,
    mmm: String,
    dt: f64,
    errors: &[f64],
    ns_per_step: f64,
) -> BenchRecord {
    BenchRecord {
        scenario: scenario.id.clone(),
        integrator: integrator.to_string(),
        mmm,
        dt_ms: dt * 1e3,
        dt_c_ms: scenario.dt_c * 1e3,
        stiffness: scenario.contact.stiffness,
        damping: scenario.contact.damping,
        friction: scenario.contact.friction,
        err_mean: mean(errors),
        err_max: max(errors),
        ns_per_step,
        realtime_factor: dt * 1e9 / ns_per_step,
    }
}

/// Timed local-error evaluation: `repetitions` timed runs after one warm-up,
/// reporting the median per-step nanoseconds.
fn measured_local_errors(
    scenario: &Scenario,
    gt: &[TickRecord],
    integrator: IntegratorKind,
    policy: PadePolicy,
    dt: f64,
    repetitions: usize,
) -> Result<(Vec<f64>, f64), BenchError> {
    let reps = repetitions.max(1);
    let mut per_step = Vec::with_capacity(reps);
    let mut errors = Vec::new();
    for rep in 0..=reps {
        let (e, ns, steps) = local_errors_at_ticks(
            scenario,
            gt,
            integrator,
            policy,
            dt,
            &(1..gt.len()).collect::<Vec<_>>(),
        )?;
        if rep == 0 {
            errors = e; // warm-up provides the (deterministic) errors
        } else {
            per_step.push(ns as f64 / steps as f64);
        }
    }
    Ok((errors, median(per_step)))
}

/// Policy used for ground-truth generation: the exponential stepper always
/// references its full-precision kernel; the others ignore the policy.
fn gt_policy(_integrator: IntegratorKind) -> PadePolicy {
    PadePolicy::Full
}

/// Speed–accuracy sweep: one record per (integrator, policy, Δt). Ground
/// truth is generated once per integrator and excluded from the timings.
pub fn speed_accuracy_sweep(
    scenario: &Scenario,
    entries: &[(IntegratorKind, PadePolicy)],
    dts: &[f64],
    repetitions: usize,
) -> Result<Vec<BenchRecord>, BenchError> {
    let mut gts: HashMap<IntegratorKind, Vec<TickRecord>> = HashMap::new();
    let mut records = Vec::new();
    for &(integrator, policy) in entries {
        if !gts.contains_key(&integrator) {
            gts.insert(
                integrator,
                ground_truth(scenario, integrator, gt_policy(integrator))?,
            );
        }
        let gt = &gts[&integrator];
        for &dt in dts {
            let (errors, ns_per_step) =
                measured_local_errors(scenario, gt, integrator, policy, dt, repetitions)?;
            let mmm = match integrator {
                IntegratorKind::Expo => policy.to_string(),
                _ => "-".to_string(),
            };
            records.push(make_record(
                scenario,
                integrator.name(),
                mmm,
                dt,
                &errors,
                ns_per_step,
            ));
        }
    }
    Ok(records)
}

/// Stiffness and damping-ratio sweep at a fixed step: first K varies with the
/// scenario's damping ratio held, then ξ varies with the scenario's stiffness
/// held. Each grid point gets its own ground truth.
pub fn stiffness_damping_sweep(
    scenario: &Scenario,
    integrator: IntegratorKind,
    policy: PadePolicy,
    dt: f64,
    k_grid: &[f64],
    xi_grid: &[f64],
    repetitions: usize,
) -> Result<Vec<BenchRecord>, BenchError> {
    let mut records = Vec::new();
    let xi_fixed = scenario.contact.damping_ratio();
    let k_fixed = scenario.contact.stiffness;
    let mu = scenario.contact.friction;

    let mut eval = |params: ContactParams| -> Result<(), BenchError> {
        let scn = scenario.clone().with_contact(params);
        let gt = ground_truth(&scn, integrator, gt_policy(integrator))?;
        let (errors, ns_per_step) =
            measured_local_errors(&scn, &gt, integrator, policy, dt, repetitions)?;
        let mmm = match integrator {
            IntegratorKind::Expo => policy.to_string(),
            _ => "-".to_string(),
        };
        records.push(make_record(
            &scn,
            integrator.name(),
            mmm,
            dt,
            &errors,
            ns_per_step,
        ));
        Ok(())
    };

    for &k in k_grid {
        eval(ContactParams::from_damping_ratio(k, xi_fixed, mu))?;
    }
    for &xi in xi_grid {
        eval(ContactParams::from_damping_ratio(k_fixed, xi, mu))?;
    }
    Ok(records)
}

/// Runs the full scenario continuously at each step of the grid and returns
/// the largest stable one (`None` if all grid entries diverge). The grid is
/// evaluated in descending order; a smaller step diverging below a stable
/// larger one flags a bug in the protocol and fails the search.
pub fn stability_search(
    scenario: &Scenario,
    integrator: IntegratorKind,
    policy: PadePolicy,
    dts: &[f64],
) -> Result<Option<f64>, BenchError> {
    let mut grid: Vec<f64> = dts.to_vec();
    grid.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut max_stable: Option<f64> = None;
    for &dt in &grid {
        let outcome = run_recorded(scenario, integrator, policy, dt)?;
        let stable = outcome.diverged_at.is_none();
        if stable {
            max_stable.get_or_insert(dt);
        } else if max_stable.is_some() {
            return Err(BenchError::NonMonotoneStability { dt });
        }
    }
    Ok(max_stable)
}

/// Per-step trajectory record of a plain simulation run.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub time: f64,
    pub state: RobotState,
    /// Instantaneous cone-projected contact force of each candidate point.
    pub forces: Vec<Vector3<f64>>,
    pub report: StepReport,
}

fn instantaneous_forces(
    model: &dyn Model,
    contacts: &[ContactPointState],
    state: &RobotState,
) -> Vec<Vector3<f64>> {
    let kin = model.contact_kinematics(&state.q, &state.v);
    contacts
        .iter()
        .enumerate()
        .map(|(i, cp)| {
            if cp.active {
                let f = spring_damper_force(cp, &kin.positions[i], &kin.velocities[i]);
                project_friction_cone(&f, cp.friction).projected
            } else {
                Vector3::zeros()
            }
        })
        .collect()
}

/// Continuous run recording every integration step (t = 0 included).
pub fn simulate_trajectory(
    scenario: &Scenario,
    integrator: IntegratorKind,
    policy: PadePolicy,
    dt: f64,
) -> Result<Vec<StepRecord>, BenchError> {
    let per_tick = steps_per_tick(scenario.dt_c, dt).ok_or(BenchError::StepMismatch {
        dt,
        dt_c: scenario.dt_c,
    })?;
    let n_ticks = (scenario.duration / scenario.dt_c).round() as usize;
    let model = scenario.model.as_ref();

    let mut state = scenario.initial_state.clone();
    let mut contacts = scenario.fresh_contacts();
    let mut records = vec![StepRecord {
        time: 0.0,
        state: state.clone(),
        forces: instantaneous_forces(model, &contacts, &state),
        report: StepReport::default(),
    }];

    for tick in 0..n_ticks {
        let t = tick as f64 * scenario.dt_c;
        let tau = scenario.controller.torque(t, model, &state, &contacts);
        for sub in 0..per_tick {
            let (next, report) = step(integrator, model, &mut contacts, &state, &tau, dt, policy)?;
            if !bounded(&next) {
                return Err(BenchError::Sim(SimError::Diverged));
            }
            state = next;
            records.push(StepRecord {
                time: t + (sub + 1) as f64 * dt,
                state: state.clone(),
                forces: instantaneous_forces(model, &contacts, &state),
                report,
            });
        }
    }
    Ok(records)
}

/// Richardson estimate of the position order of accuracy: single steps of
/// halving sizes from one (smooth) state, each compared against the same
/// integrator at the ground-truth step over the same span. Returns the mean
/// of the successive log₂ error ratios.
pub fn position_order_estimate(
    model: &dyn Model,
    state: &RobotState,
    contacts: &[ContactPointState],
    tau: &DVector<f64>,
    integrator: IntegratorKind,
    policy: PadePolicy,
    base_dt: f64,
    levels: usize,
) -> Result<f64, BenchError> {
    assert!(levels >= 2);
    let nv = model.info().nv;
    let mut errors = Vec::with_capacity(levels);
    for level in 0..levels {
        let dt = base_dt / 2f64.powi(level as i32);
        let substeps = steps_per_tick(dt, GROUND_TRUTH_DT).ok_or(BenchError::StepMismatch {
            dt: GROUND_TRUTH_DT,
            dt_c: dt,
        })?;

        let mut coarse_contacts = contacts.to_vec();
        let (coarse, _) = step(
            integrator,
            model,
            &mut coarse_contacts,
            state,
            tau,
            dt,
            policy,
        )?;

        let mut fine_contacts = contacts.to_vec();
        let mut fine = state.clone();
        for _ in 0..substeps {
            let (next, _) = step(
                integrator,
                model,
                &mut fine_contacts,
                &fine,
                tau,
                GROUND_TRUTH_DT,
                policy,
            )?;
            fine = next;
        }

        let diff = model.state_difference(&coarse, &fine);
        errors.push(diff.rows(0, nv).amax());
    }
    let mut ratios = Vec::new();
    for w in errors.windows(2) {
        ratios.push((w[0] / w[1]).log2());
    }
    Ok(mean(&ratios))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::GRAVITY;

    #[test]
    fn steps_per_tick_requires_divisibility() {
        assert_eq!(steps_per_tick(0.010, 0.010), Some(1));
        assert_eq!(steps_per_tick(0.010, 0.0025), Some(4));
        assert_eq!(steps_per_tick(0.010, 0.003), None);
        assert_eq!(steps_per_tick(0.010, GROUND_TRUTH_DT), Some(640));
    }

    #[test]
    fn ballistic_ground_truth_matches_closed_form() {
        let mut scn = Scenario::builtin("mass-drop").unwrap();
        scn.duration = 0.1;
        scn.initial_state.q[2] = 10.0; // stays in flight for the whole run
        scn.initial_state.v[2] = 0.0;
        let gt = ground_truth(&scn, IntegratorKind::Rk4, PadePolicy::Full).unwrap();
        for record in &gt {
            let t = record.time;
            let z = 10.0 - 0.5 * GRAVITY * t * t;
            assert!((record.state.q[2] - z).abs() <= 1e-10);
            assert!((record.state.v[2] + GRAVITY * t).abs() <= 1e-10);
        }
    }

    #[test]
    fn ground_truth_ticks_include_every_step_when_dt_equals_dt_c() {
        let mut scn = Scenario::builtin("mass-drop").unwrap();
        scn.duration = 0.05;
        scn.dt_c = GROUND_TRUTH_DT;
        let gt = ground_truth(&scn, IntegratorKind::EulerExplicit, PadePolicy::Full).unwrap();
        assert_eq!(gt.len(), (0.05 / GROUND_TRUTH_DT).round() as usize + 1);
    }

    #[test]
    fn normal_force_settles_to_weight() {
        let scn = Scenario::builtin("mass-drop").unwrap();
        let traj = simulate_trajectory(&scn, IntegratorKind::Expo, PadePolicy::Full, 0.001)
            .unwrap();
        for record in traj.iter().filter(|r| r.time > 0.2) {
            let fz = record.forces[0].z;
            assert!(
                (fz - GRAVITY).abs() <= 0.01 * GRAVITY,
                "t = {}: fz = {fz}",
                record.time
            );
        }
    }

    #[test]
    fn local_error_of_ground_truth_settings_is_zero() {
        // Re-running the ground-truth integrator at the ground-truth step
        // reproduces the recorded states exactly (same arithmetic).
        let mut scn = Scenario::builtin("mass-drop").unwrap();
        scn.duration = 0.05;
        let gt = ground_truth(&scn, IntegratorKind::EulerExplicit, PadePolicy::Full).unwrap();
        let errors = local_errors(
            &scn,
            &gt,
            IntegratorKind::EulerExplicit,
            PadePolicy::Full,
            GROUND_TRUTH_DT,
        )
        .unwrap();
        assert!(errors.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn local_errors_are_nonnegative_and_invariant_to_recording_stride() {
        let mut scn = Scenario::builtin("mass-drop").unwrap();
        scn.duration = 0.2;
        let gt = ground_truth(&scn, IntegratorKind::Expo, PadePolicy::Full).unwrap();
        let all = local_errors(&scn, &gt, IntegratorKind::Expo, PadePolicy::Full, 0.005).unwrap();
        assert!(all.iter().all(|&e| e >= 0.0));

        let even_ticks: Vec<usize> = (1..gt.len()).filter(|i| i % 2 == 0).collect();
        let (sub, _, _) = local_errors_at_ticks(
            &scn,
            &gt,
            IntegratorKind::Expo,
            PadePolicy::Full,
            0.005,
            &even_ticks,
        )
        .unwrap();
        for (j, &i) in even_ticks.iter().enumerate() {
            assert_eq!(sub[j], all[i - 1]);
        }
    }

    #[test]
    fn stability_bracket_on_scalar_decay() {
        // v̇ = −a·v with a = 100: explicit Euler is stable up to dt = 2/a.
        struct LinearDecay {
            info: crate::mechanics::ModelInfo,
            rate: f64,
        }
        impl Model for LinearDecay {
            fn info(&self) -> &crate::mechanics::ModelInfo {
                &self.info
            }
            fn mass_matrix(&self, _q: &DVector<f64>) -> nalgebra::DMatrix<f64> {
                nalgebra::DMatrix::identity(1, 1)
            }
            fn nonlinear_and_actuation(
                &self,
                _q: &DVector<f64>,
                v: &DVector<f64>,
                _tau: &DVector<f64>,
            ) -> DVector<f64> {
                -self.rate * v
            }
            fn contact_kinematics(
                &self,
                _q: &DVector<f64>,
                _v: &DVector<f64>,
            ) -> crate::mechanics::ContactKinematics {
                crate::mechanics::ContactKinematics {
                    positions: vec![],
                    velocities: vec![],
                    jacobians: vec![],
                    drifts: vec![],
                }
            }
            fn integrate_configuration(
                &self,
                q: &DVector<f64>,
                dq: &DVector<f64>,
            ) -> DVector<f64> {
                q + dq
            }
            fn state_difference(&self, x1: &RobotState, x2: &RobotState) -> DVector<f64> {
                let mut out = DVector::zeros(2);
                out[0] = x1.q[0] - x2.q[0];
                out[1] = x1.v[0] - x2.v[0];
                out
            }
            fn kinetic_energy(&self, _q: &DVector<f64>, v: &DVector<f64>) -> f64 {
                0.5 * v[0] * v[0]
            }
            fn potential_energy(&self, _q: &DVector<f64>) -> f64 {
                0.0
            }
        }
        let model = std::sync::Arc::new(LinearDecay {
            info: crate::mechanics::ModelInfo {
                nq: 1,
                nv: 1,
                nc: 0,
                nu: 1,
                contact_names: vec![],
            },
            rate: 100.0,
        });
        let scn = Scenario {
            id: "scalar-decay".to_string(),
            model,
            initial_state: RobotState::new(
                DVector::zeros(1),
                DVector::from_vec(vec![900.0]),
            ),
            controller: Controller::Passive,
            contact: ContactParams::new(1.0, 0.0, 0.0),
            duration: 1.024,
            dt_c: 0.032,
        };
        // Grid 32, 16, 8 ms brackets the 2/a = 20 ms bound.
        let max_stable = stability_search(
            &scn,
            IntegratorKind::EulerExplicit,
            PadePolicy::Full,
            &[0.032, 0.016, 0.008],
        )
        .unwrap()
        .unwrap();
        assert_eq!(max_stable, 0.016);
    }

    #[test]
    fn expo_is_stable_at_dt_c_without_contacts() {
        let mut scn = Scenario::builtin("mass-drop").unwrap();
        scn.initial_state.q[2] = 50.0;
        scn.duration = 0.5;
        let max_stable =
            stability_search(&scn, IntegratorKind::Expo, PadePolicy::Full, &[scn.dt_c])
                .unwrap()
                .unwrap();
        assert_eq!(max_stable, scn.dt_c);
    }

    #[test]
    fn mean_local_error_refines_monotonically_on_smooth_scenario() {
        let mut scn = Scenario::builtin("hopper-squat").unwrap();
        scn.duration = 0.4;
        let gt = ground_truth(&scn, IntegratorKind::Expo, PadePolicy::Full).unwrap();
        let dts = [0.010, 0.005, 0.0025, 0.00125];
        let means: Vec<f64> = dts
            .iter()
            .map(|&dt| {
                let e = local_errors(&scn, &gt, IntegratorKind::Expo, PadePolicy::Full, dt)
                    .unwrap();
                mean(&e)
            })
            .collect();
        let mut violations = 0;
        for w in means.windows(2) {
            if w[1] > w[0] {
                violations += 1;
            }
        }
        assert!(violations <= 1, "means: {means:?}");
    }

    #[test]
    fn squat_controller_holds_height() {
        let mut scn = Scenario::builtin("hopper-squat").unwrap();
        if let Controller::StateFeedback { program, .. } = &mut scn.controller {
            *program = ReferenceProgram::Hold;
        }
        scn.duration = 2.0;
        let z0 = scn.initial_state.q[1];
        let gt = ground_truth(&scn, IntegratorKind::Rk4, PadePolicy::Full).unwrap();
        for record in &gt {
            let z = record.state.q[1];
            assert!(
                (z - z0).abs() <= 0.1 * z0,
                "t = {}: z = {z} vs setpoint {z0}",
                record.time
            );
        }
    }
}
