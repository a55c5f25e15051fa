//! Stepping schemes: the exponential contact stepper and three reference
//! integrators (explicit Euler, RK4, implicit Euler with damped Newton).
//!
//! All four share the same continuous dynamics, contact detection, friction
//! projection and anchor-slip policy, so their speed/accuracy/stability can
//! be compared like-for-like. The exponential stepper treats the active
//! contact-point dynamics
//!
//! ```text
//!   d/dt [Δp; Δṗ] = A·[Δp; Δṗ] + b,   A = [0 I; −ΥK −ΥB],  b = [0; p̈_free]
//! ```
//!
//! as linear over the step (Υ = J M⁻¹ Jᵀ frozen at the step start), solves it
//! exactly through the matrix exponential, and feeds the time-averaged
//! contact forces — clipped by the friction cone — back into the joint-space
//! update.

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Vector3};
use thiserror::Error;

use crate::contact::{
    anchor_slip_update, detect_and_update, project_friction_cone, spring_damper_force,
    ContactPointState,
};
use crate::expm::{balance, compute_integrals, expm_multiply, ExpmError, PadePolicy};
use crate::mechanics::{Model, RobotState};

/// Residual tolerance (∞-norm) and iteration cap of the implicit solver.
pub const NEWTON_TOLERANCE: f64 = 1e-6;
pub const NEWTON_MAX_ITERATIONS: usize = 20;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state diverged to a non-finite value")]
    Diverged,
    #[error("mass matrix factorization failed")]
    SingularMass,
    #[error(transparent)]
    Kernel(#[from] ExpmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntegratorKind {
    Expo,
    EulerExplicit,
    Rk4,
    EulerImplicit,
}

impl IntegratorKind {
    pub const ALL: [IntegratorKind; 4] = [
        IntegratorKind::Expo,
        IntegratorKind::EulerExplicit,
        IntegratorKind::Rk4,
        IntegratorKind::EulerImplicit,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "expo" => Some(IntegratorKind::Expo),
            "euler-exp" => Some(IntegratorKind::EulerExplicit),
            "rk4" => Some(IntegratorKind::Rk4),
            "euler-imp" => Some(IntegratorKind::EulerImplicit),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IntegratorKind::Expo => "expo",
            IntegratorKind::EulerExplicit => "euler-exp",
            IntegratorKind::Rk4 => "rk4",
            IntegratorKind::EulerImplicit => "euler-imp",
        }
    }
}

impl std::fmt::Display for IntegratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Linear dynamics of the active contact points at one state.
#[derive(Debug, Clone)]
pub struct ContactLds {
    /// Indices of the active contacts, in stacking order.
    pub active: Vec<usize>,
    /// 2k×2k system matrix [0 I; −ΥK −ΥB], k = 3 · #active.
    pub a: DMatrix<f64>,
    /// 2k constant term (0, p̈_free).
    pub b: DVector<f64>,
    /// 2k initial condition (Δp, Δṗ).
    pub x0: DVector<f64>,
    /// k×2k force read-out [−K −B] so that λ = D·x.
    pub d: DMatrix<f64>,
    /// Delassus matrix Υ = J M⁻¹ Jᵀ, symmetric PSD.
    pub delassus: DMatrix<f64>,
    /// Free joint acceleration v̇_free = M⁻¹u.
    pub free_acc: DVector<f64>,
    /// Free contact-point acceleration p̈_free = J v̇_free + J̇v.
    pub free_contact_acc: DVector<f64>,
    /// M⁻¹Jᵀ (nv×k): maps contact forces to joint accelerations.
    pub minv_jt: DMatrix<f64>,
    /// M⁻¹JᵀD (nv×2k): maps contact state to joint acceleration.
    pub force_lift: DMatrix<f64>,
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Default)]
pub struct StepReport {
    /// Step-averaged contact force λ̄ = D·x_int/Δt, stacked over all
    /// candidate points (zeros when inactive). Exponential stepper only.
    pub lambda_avg: Option<DVector<f64>>,
    /// Doubly-averaged force λ̿ = 2·D·x_int2/Δt². Exponential stepper only.
    pub lambda_avg2: Option<DVector<f64>>,
    /// Per-candidate slip flags (anchor was reset this step).
    pub slipping: Vec<bool>,
    /// Newton iterations spent (implicit stepper only).
    pub newton_iterations: Option<usize>,
    /// Whether Newton reached the residual tolerance (implicit only).
    pub newton_converged: Option<bool>,
    pub wall_ns: u64,
    /// Time spent in the exponential-integral kernel (exponential stepper).
    pub kernel_ns: u64,
}

/// Continuous dynamics ẋ = (v, M⁻¹(u + Jᵀλ)) with λ the cone-projected
/// spring-damper force of each active contact (zero rows when inactive).
/// Returns the configuration tangent (= v) and the acceleration.
///
/// Panics if the mass matrix is not positive definite; that is a model
/// contract violation, not a runtime condition.
pub fn continuous_dynamics(
    model: &dyn Model,
    contacts: &[ContactPointState],
    state: &RobotState,
    tau: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let m = model.mass_matrix(&state.q);
    let mut rhs = model.nonlinear_and_actuation(&state.q, &state.v, tau);
    if contacts.iter().any(|c| c.active) {
        let kin = model.contact_kinematics(&state.q, &state.v);
        for (i, cp) in contacts.iter().enumerate() {
            if !cp.active {
                continue;
            }
            let f = spring_damper_force(cp, &kin.positions[i], &kin.velocities[i]);
            let f = project_friction_cone(&f, cp.friction).projected;
            rhs += kin.jacobians[i].transpose() * f;
        }
    }
    let chol = Cholesky::new(m).expect("mass matrix must be positive definite");
    (state.v.clone(), chol.solve(&rhs))
}

/// Assembles the contact-space linear system at the given state.
/// Requires at least one active contact.
pub fn build_contact_lds(
    model: &dyn Model,
    contacts: &[ContactPointState],
    q: &DVector<f64>,
    v: &DVector<f64>,
    tau: &DVector<f64>,
) -> Result<ContactLds, SimError> {
    let active: Vec<usize> = contacts
        .iter()
        .enumerate()
        .filter(|(_, c)| c.active)
        .map(|(i, _)| i)
        .collect();
    assert!(!active.is_empty(), "no active contacts");
    let k = 3 * active.len();
    let nv = model.info().nv;

    let kin = model.contact_kinematics(q, v);
    let mass = model.mass_matrix(q);
    let u = model.nonlinear_and_actuation(q, v, tau);
    let chol = Cholesky::new(mass).ok_or(SimError::SingularMass)?;
    let free_acc = chol.solve(&u);

    let mut jac = DMatrix::<f64>::zeros(k, nv);
    let mut x0 = DVector::<f64>::zeros(2 * k);
    let mut k_diag = DVector::<f64>::zeros(k);
    let mut b_diag = DVector::<f64>::zeros(k);
    for (row, &ci) in active.iter().enumerate() {
        let cp = &contacts[ci];
        jac.view_mut((3 * row, 0), (3, nv))
            .copy_from(&kin.jacobians[ci]);
        let dp = kin.positions[ci] - cp.anchor_pos;
        let dv = kin.velocities[ci] - cp.anchor_vel;
        for axis in 0..3 {
            x0[3 * row + axis] = dp[axis];
            x0[k + 3 * row + axis] = dv[axis];
            k_diag[3 * row + axis] = cp.stiffness[axis];
            b_diag[3 * row + axis] = cp.damping[axis];
        }
    }

    // Υ = WᵀW with W = L⁻¹Jᵀ keeps the Delassus matrix symmetric PSD even in
    // floating point.
    let w = chol
        .l()
        .solve_lower_triangular(&jac.transpose())
        .ok_or(SimError::SingularMass)?;
    let delassus = w.transpose() * &w;

    let jvdot = &jac * &free_acc;
    let mut free_contact_acc = DVector::<f64>::zeros(k);
    for (row, &ci) in active.iter().enumerate() {
        for axis in 0..3 {
            free_contact_acc[3 * row + axis] = jvdot[3 * row + axis] + kin.drifts[ci][axis];
        }
    }

    let mut a = DMatrix::<f64>::zeros(2 * k, 2 * k);
    for i in 0..k {
        a[(i, k + i)] = 1.0;
    }
    for i in 0..k {
        for j in 0..k {
            a[(k + i, j)] = -delassus[(i, j)] * k_diag[j];
            a[(k + i, k + j)] = -delassus[(i, j)] * b_diag[j];
        }
    }

    let mut b = DVector::<f64>::zeros(2 * k);
    b.rows_mut(k, k).copy_from(&free_contact_acc);

    let mut d = DMatrix::<f64>::zeros(k, 2 * k);
    for i in 0..k {
        d[(i, i)] = -k_diag[i];
        d[(i, k + i)] = -b_diag[i];
    }

    let minv_jt = chol.solve(&jac.transpose());
    let force_lift = &minv_jt * &d;

    Ok(ContactLds {
        active,
        a,
        b,
        x0,
        d,
        delassus,
        free_acc,
        free_contact_acc,
        minv_jt,
        force_lift,
    })
}

/// Contact forces λ(t) = D·x(t) predicted by the frozen linear model, with
/// x(t) = e^{tA}x0 + ∫₀ᵗ e^{τA}dτ·b evaluated through one augmented
/// exponential.
pub fn predict_contact_forces(
    lds: &ContactLds,
    t: f64,
    policy: PadePolicy,
) -> Result<DVector<f64>, ExpmError> {
    let n = lds.a.nrows();
    let mut aug = DMatrix::<f64>::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&lds.a);
    aug.view_mut((0, n), (n, 1)).copy_from(&lds.b);
    aug *= t;
    let (dbal, balanced) = balance(&aug);
    let mut v = DMatrix::<f64>::zeros(n + 1, 1);
    for i in 0..n {
        v[(i, 0)] = lds.x0[i] / dbal[i];
    }
    v[(n, 0)] = 1.0 / dbal[n];
    let w = expm_multiply(&balanced, &v, policy)?;
    let x = DVector::from_fn(n, |i, _| dbal[i] * w[(i, 0)]);
    Ok(&lds.d * x)
}

/// Velocity-then-position update shared by the ballistic branch of the
/// exponential stepper and the explicit Euler stepper, so the two are
/// bit-identical when no contact is active:
/// v⁺ = v + Δt·v̇, q⁺ = integrate(q, Δt·v + Δt²/2·v̇).
fn explicit_update(
    model: &dyn Model,
    state: &RobotState,
    vdot: &DVector<f64>,
    dt: f64,
) -> RobotState {
    let v_new = &state.v + dt * vdot;
    let dq = dt * &state.v + (dt * dt / 2.0) * vdot;
    RobotState::new(model.integrate_configuration(&state.q, &dq), v_new)
}

fn check_finite(state: RobotState) -> Result<RobotState, SimError> {
    if state.is_finite() {
        Ok(state)
    } else {
        Err(SimError::Diverged)
    }
}

/// Recomputes the instantaneous spring-damper force of each active contact at
/// the post-step state, projects it, and resets the anchor of every contact
/// either pre-flagged as slipping or whose post-step force left the cone.
/// Returns the final slip flags.
fn apply_slip_resets(
    model: &dyn Model,
    contacts: &mut [ContactPointState],
    state: &RobotState,
    preflagged: Option<&[bool]>,
) -> Vec<bool> {
    let mut slipping = vec![false; contacts.len()];
    let candidate = |i: usize, c: &ContactPointState| -> bool {
        c.active && preflagged.map_or(true, |flags| flags[i])
    };
    if !contacts.iter().enumerate().any(|(i, c)| candidate(i, c)) {
        return slipping;
    }
    let kin = model.contact_kinematics(&state.q, &state.v);
    for (i, cp) in contacts.iter_mut().enumerate() {
        if !candidate(i, cp) {
            continue;
        }
        let p = kin.positions[i];
        let pdot = kin.velocities[i];
        let force = spring_damper_force(cp, &p, &pdot);
        let check = project_friction_cone(&force, cp.friction);
        // Pre-flagged contacts (averaged force left the cone) always reset;
        // otherwise reset only when the instantaneous force leaves the cone.
        if preflagged.is_some() || !check.inside {
            anchor_slip_update(cp, &p, &pdot, &check.projected);
            slipping[i] = true;
        }
    }
    slipping
}

/// One step of the exponential contact integrator.
///
/// 1. Detect contact activation/deactivation.
/// 2. No active contact: plain ballistic update.
/// 3. Otherwise freeze the contact LDS, evaluate its exact integrals over
///    the step, and form the averaged forces λ̄ = D·x_int/Δt and
///    λ̿ = 2·D·x_int2/Δt².
/// 4. Project both onto the friction cone; a clipped λ̄ marks the contact as
///    slipping.
/// 5. v⁺ = v + Δt·(v̇_free + M⁻¹Jᵀλ̄_pr); the position update integrates the
///    mean velocity built from λ̿_pr. With no clipping these reproduce the
///    exact integrals of the frozen linear model.
/// 6. Slipping contacts get their anchor reset from the post-step force.
pub fn expo_step(
    model: &dyn Model,
    contacts: &mut [ContactPointState],
    state: &RobotState,
    tau: &DVector<f64>,
    dt: f64,
    policy: PadePolicy,
) -> Result<(RobotState, StepReport), SimError> {
    assert!(dt > 0.0);
    let t0 = Instant::now();
    let kin = model.contact_kinematics(&state.q, &state.v);
    detect_and_update(&kin, contacts);

    if !contacts.iter().any(|c| c.active) {
        let (_, vdot) = continuous_dynamics(model, contacts, state, tau);
        let next = check_finite(explicit_update(model, state, &vdot, dt))?;
        let report = StepReport {
            slipping: vec![false; contacts.len()],
            wall_ns: t0.elapsed().as_nanos() as u64,
            ..StepReport::default()
        };
        return Ok((next, report));
    }

    let lds = build_contact_lds(model, contacts, &state.q, &state.v, tau)?;
    let k = 3 * lds.active.len();

    let kernel_t0 = Instant::now();
    let ints = compute_integrals(&lds.a, &lds.b, &lds.x0, dt, policy)?;
    let kernel_ns = kernel_t0.elapsed().as_nanos() as u64;

    let lam_avg = &lds.d * &ints.x_int / dt;
    let lam_avg2 = &lds.d * &ints.x_int2 * (2.0 / (dt * dt));

    let mut lam_pr = DVector::<f64>::zeros(k);
    let mut lam_pr2 = DVector::<f64>::zeros(k);
    let mut slip_flags = vec![false; contacts.len()];
    for (row, &ci) in lds.active.iter().enumerate() {
        let mu = contacts[ci].friction;
        let f1 = Vector3::new(lam_avg[3 * row], lam_avg[3 * row + 1], lam_avg[3 * row + 2]);
        let c1 = project_friction_cone(&f1, mu);
        slip_flags[ci] = !c1.inside;
        let f2 = Vector3::new(
            lam_avg2[3 * row],
            lam_avg2[3 * row + 1],
            lam_avg2[3 * row + 2],
        );
        let c2 = project_friction_cone(&f2, mu);
        for axis in 0..3 {
            lam_pr[3 * row + axis] = c1.projected[axis];
            lam_pr2[3 * row + axis] = c2.projected[axis];
        }
    }

    let vdot_pr = &lds.free_acc + &lds.minv_jt * &lam_pr;
    let vdot_pr2 = &lds.free_acc + &lds.minv_jt * &lam_pr2;
    let v_new = &state.v + dt * &vdot_pr;
    let v_mean = &state.v + (dt / 2.0) * &vdot_pr2;
    let q_new = model.integrate_configuration(&state.q, &(dt * v_mean));
    let next = check_finite(RobotState::new(q_new, v_new))?;

    let slipping = apply_slip_resets(model, contacts, &next, Some(&slip_flags));

    let nc = contacts.len();
    let mut lam_avg_full = DVector::<f64>::zeros(3 * nc);
    let mut lam_avg2_full = DVector::<f64>::zeros(3 * nc);
    for (row, &ci) in lds.active.iter().enumerate() {
        for axis in 0..3 {
            lam_avg_full[3 * ci + axis] = lam_avg[3 * row + axis];
            lam_avg2_full[3 * ci + axis] = lam_avg2[3 * row + axis];
        }
    }

    Ok((
        next,
        StepReport {
            lambda_avg: Some(lam_avg_full),
            lambda_avg2: Some(lam_avg2_full),
            slipping,
            newton_iterations: None,
            newton_converged: None,
            wall_ns: t0.elapsed().as_nanos() as u64,
            kernel_ns,
        },
    ))
}

/// Explicit Euler with the half-step position correction:
/// v⁺ = v + Δt·v̇, q⁺ = integrate(q, Δt·v + Δt²/2·v̇).
pub fn euler_explicit_step(
    model: &dyn Model,
    contacts: &mut [ContactPointState],
    state: &RobotState,
    tau: &DVector<f64>,
    dt: f64,
) -> Result<(RobotState, StepReport), SimError> {
    assert!(dt > 0.0);
    let t0 = Instant::now();
    let kin = model.contact_kinematics(&state.q, &state.v);
    detect_and_update(&kin, contacts);

    let (_, vdot) = continuous_dynamics(model, contacts, state, tau);
    let next = check_finite(explicit_update(model, state, &vdot, dt))?;
    let slipping = apply_slip_resets(model, contacts, &next, None);

    Ok((
        next,
        StepReport {
            slipping,
            wall_ns: t0.elapsed().as_nanos() as u64,
            ..StepReport::default()
        },
    ))
}

/// Classical four-stage Runge–Kutta on the continuous dynamics. The contact
/// set is frozen across the stages and re-detected between steps; stage
/// configuration increments are tangent vectors combined with the standard
/// weights and applied once through the configuration manifold.
pub fn rk4_step(
    model: &dyn Model,
    contacts: &mut [ContactPointState],
    state: &RobotState,
    tau: &DVector<f64>,
    dt: f64,
) -> Result<(RobotState, StepReport), SimError> {
    assert!(dt > 0.0);
    let t0 = Instant::now();
    let kin = model.contact_kinematics(&state.q, &state.v);
    detect_and_update(&kin, contacts);

    let eval = |dq: &DVector<f64>, v: &DVector<f64>, scale: f64| {
        let q = model.integrate_configuration(&state.q, &(dq * scale));
        continuous_dynamics(model, contacts, &RobotState::new(q, v.clone()), tau)
    };

    let (k1q, k1v) = continuous_dynamics(model, contacts, state, tau);
    let (k2q, k2v) = eval(&k1q, &(&state.v + (dt / 2.0) * &k1v), dt / 2.0);
    let (k3q, k3v) = eval(&k2q, &(&state.v + (dt / 2.0) * &k2v), dt / 2.0);
    let (k4q, k4v) = eval(&k3q, &(&state.v + dt * &k3v), dt);

    let dq = (dt / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
    let v_new = &state.v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    let q_new = model.integrate_configuration(&state.q, &dq);
    let next = check_finite(RobotState::new(q_new, v_new))?;
    let slipping = apply_slip_resets(model, contacts, &next, None);

    Ok((
        next,
        StepReport {
            slipping,
            wall_ns: t0.elapsed().as_nanos() as u64,
            ..StepReport::default()
        },
    ))
}

/// Implicit Euler: solves r(v⁺) = v⁺ − v − Δt·a(q⁺(v⁺), v⁺) = 0 with
/// q⁺(v⁺) = integrate(q, Δt·v⁺) by damped Newton (finite-difference
/// Jacobian, step-halving line search). Non-convergence is reported in the
/// step report, never fatal: the best iterate found is used.
pub fn euler_implicit_step(
    model: &dyn Model,
    contacts: &mut [ContactPointState],
    state: &RobotState,
    tau: &DVector<f64>,
    dt: f64,
) -> Result<(RobotState, StepReport), SimError> {
    assert!(dt > 0.0);
    let t0 = Instant::now();
    let kin = model.contact_kinematics(&state.q, &state.v);
    detect_and_update(&kin, contacts);

    let residual = |w: &DVector<f64>| -> DVector<f64> {
        let q_next = model.integrate_configuration(&state.q, &(dt * w));
        let (_, acc) =
            continuous_dynamics(model, contacts, &RobotState::new(q_next, w.clone()), tau);
        w - &state.v - dt * acc
    };

    // Explicit predictor as the starting guess.
    let (_, a0) = continuous_dynamics(model, contacts, state, tau);
    let mut w = &state.v + dt * &a0;
    let mut r = residual(&w);
    let mut best_w = w.clone();
    let mut best_norm = r.amax();
    let mut iterations = 0;
    let mut converged = best_norm <= NEWTON_TOLERANCE;

    while !converged && iterations < NEWTON_MAX_ITERATIONS {
        let n = w.len();
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let h = 1e-7 * (1.0 + w[j].abs());
            let mut wp = w.clone();
            wp[j] += h;
            let rp = residual(&wp);
            for i in 0..n {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let Some(delta) = jac.lu().solve(&(-&r)) else {
            break;
        };

        let norm_before = r.amax();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..8 {
            let candidate = &w + alpha * &delta;
            let rc = residual(&candidate);
            if rc.amax() < norm_before {
                w = candidate;
                r = rc;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        if r.amax() < best_norm {
            best_norm = r.amax();
            best_w = w.clone();
        }
        if !accepted {
            break;
        }
        converged = r.amax() <= NEWTON_TOLERANCE;
    }

    let v_new = best_w;
    let q_new = model.integrate_configuration(&state.q, &(dt * &v_new));
    let next = check_finite(RobotState::new(q_new, v_new))?;
    let slipping = apply_slip_resets(model, contacts, &next, None);

    Ok((
        next,
        StepReport {
            slipping,
            newton_iterations: Some(iterations),
            newton_converged: Some(converged),
            wall_ns: t0.elapsed().as_nanos() as u64,
            ..StepReport::default()
        },
    ))
}

/// Dispatches one step of the named integrator. The policy only affects the
/// exponential stepper.
pub fn step(
    kind: IntegratorKind,
    model: &dyn Model,
    contacts: &mut [ContactPointState],
    state: &RobotState,
    tau: &DVector<f64>,
    dt: f64,
    policy: PadePolicy,
) -> Result<(RobotState, StepReport), SimError> {
    match kind {
        IntegratorKind::Expo => expo_step(model, contacts, state, tau, dt, policy),
        IntegratorKind::EulerExplicit => euler_explicit_step(model, contacts, state, tau, dt),
        IntegratorKind::Rk4 => rk4_step(model, contacts, state, tau, dt),
        IntegratorKind::EulerImplicit => euler_implicit_step(model, contacts, state, tau, dt),
    }
}
