//! Stance-phase linear state feedback for the hopper scenarios.
//!
//! A point-foot hopper standing still is an unstable balance problem, and a
//! zero-order-held joint PD at controller rate cannot stabilize it without
//! exciting the sampled loop. The scenarios therefore use a discrete LQR
//! designed directly on the ZOH-discretized stance dynamics: find the static
//! equilibrium (pose pinned, center of mass over the foot, contact spring
//! carrying the weight), linearize the in-contact dynamics numerically,
//! discretize at the controller step through the matrix exponential, and
//! iterate the Riccati recursion.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::contact::ContactPointState;
use crate::integrators::continuous_dynamics;
use crate::mechanics::{Model, RobotState};
use crate::expm::{pade_expm, PadePolicy};

use super::ContactParams;

/// Stance equilibrium of a hopper pose: configuration, feed-forward torque.
pub struct StanceEquilibrium {
    pub q: DVector<f64>,
    pub tau: DVector<f64>,
}

/// Contact state pinned to the given foot location (anchors at the foot, so
/// the tangential force vanishes there).
fn anchored_contact(model: &dyn Model, q: &DVector<f64>, contact: &ContactParams) -> Vec<ContactPointState> {
    let kin = model.contact_kinematics(q, &DVector::zeros(model.info().nv));
    let mut cp = ContactPointState::new(contact.stiffness, contact.damping, contact.friction);
    cp.active = true;
    cp.anchor_pos = Vector3::new(kin.positions[0].x, kin.positions[0].y, 0.0);
    vec![cp]
}

/// Solves the standing equilibrium of the hopper at the given hip/knee pose:
/// unknowns are pitch, height and the two joint torques; the residual is the
/// acceleration of the (z, pitch, hip, knee) coordinates with the foot
/// anchored in place. Newton with a finite-difference Jacobian.
pub fn hopper_stance_equilibrium(
    model: &dyn Model,
    hip: f64,
    knee: f64,
    contact: &ContactParams,
) -> StanceEquilibrium {
    // Initial height: foot at the static penetration for the total weight,
    // both read off the model (foot drop from kinematics, weight from the
    // potential-energy gradient).
    let probe = DVector::from_vec(vec![0.0, 0.0, 0.0, hip, knee]);
    let drop = -model.contact_kinematics(&probe, &DVector::zeros(5)).positions[0].z;
    let h = 1e-6;
    let mut probe_up = probe.clone();
    probe_up[1] += h;
    let weight = (model.potential_energy(&probe_up) - model.potential_energy(&probe)) / h;
    let z_guess = drop - weight / contact.stiffness;

    let residual = |w: &DVector<f64>| -> DVector<f64> {
        let q = DVector::from_vec(vec![0.0, w[1], w[0], hip, knee]);
        let tau = DVector::from_vec(vec![w[2], w[3]]);
        let contacts = anchored_contact(model, &q, contact);
        let state = RobotState::new(q, DVector::zeros(5));
        let (_, acc) = continuous_dynamics(model, &contacts, &state, &tau);
        DVector::from_vec(vec![acc[1], acc[2], acc[3], acc[4]])
    };

    let mut w = DVector::from_vec(vec![0.0, z_guess, 0.0, 0.0]);
    for _ in 0..50 {
        let r = residual(&w);
        if r.amax() < 1e-10 {
            break;
        }
        let mut jac = DMatrix::zeros(4, 4);
        for j in 0..4 {
            let h = 1e-7 * (1.0 + w[j].abs());
            let mut wp = w.clone();
            wp[j] += h;
            let rp = residual(&wp);
            for i in 0..4 {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let delta = jac.lu().solve(&(-&r)).expect("singular stance Jacobian");
        w += delta;
    }
    StanceEquilibrium {
        q: DVector::from_vec(vec![0.0, w[1], w[0], hip, knee]),
        tau: DVector::from_vec(vec![w[2], w[3]]),
    }
}

/// ZOH-discretized linearization of the in-contact dynamics about
/// (q*, v = 0, τ*): returns (Ad, Bd) for the state (q − q*, v).
pub fn discretized_stance_linearization(
    model: &dyn Model,
    eq: &StanceEquilibrium,
    contact: &ContactParams,
    dt: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let nv = model.info().nv;
    let n = 2 * nv;
    let nu = model.info().nu;
    let contacts = anchored_contact(model, &eq.q, contact);

    let deriv = |dq: &DVector<f64>, v: &DVector<f64>, tau: &DVector<f64>| -> DVector<f64> {
        let q = model.integrate_configuration(&eq.q, dq);
        let (_, acc) = continuous_dynamics(model, &contacts, &RobotState::new(q, v.clone()), tau);
        let mut out = DVector::zeros(n);
        out.rows_mut(0, nv).copy_from(v);
        out.rows_mut(nv, nv).copy_from(&acc);
        out
    };

    let f0 = deriv(&DVector::zeros(nv), &DVector::zeros(nv), &eq.tau);
    let h = 1e-6;
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut dq = DVector::zeros(nv);
        let mut v = DVector::zeros(nv);
        if j < nv {
            dq[j] = h;
        } else {
            v[j - nv] = h;
        }
        let fp = deriv(&dq, &v, &eq.tau);
        for i in 0..n {
            a[(i, j)] = (fp[i] - f0[i]) / h;
        }
    }
    let mut b = DMatrix::zeros(n, nu);
    for j in 0..nu {
        let mut tau = eq.tau.clone();
        tau[j] += h;
        let fp = deriv(&DVector::zeros(nv), &DVector::zeros(nv), &tau);
        for i in 0..n {
            b[(i, j)] = (fp[i] - f0[i]) / h;
        }
    }

    // [Ad Bd; 0 I] = exp(dt·[A B; 0 0]).
    let mut aug = DMatrix::zeros(n + nu, n + nu);
    aug.view_mut((0, 0), (n, n)).copy_from(&a);
    aug.view_mut((0, n), (n, nu)).copy_from(&b);
    let e = pade_expm(&(aug * dt), PadePolicy::Full).expect("discretization failed");
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, nu)).into_owned(),
    )
}

/// Discrete-time LQR gain by Riccati iteration.
pub fn dlqr(
    ad: &DMatrix<f64>,
    bd: &DMatrix<f64>,
    q_weights: &DVector<f64>,
    r_weight: f64,
) -> DMatrix<f64> {
    let n = ad.nrows();
    let nu = bd.ncols();
    let q = DMatrix::from_diagonal(q_weights);
    let r = DMatrix::identity(nu, nu) * r_weight;
    let mut p = q.clone();
    for _ in 0..20_000 {
        let btp = bd.transpose() * &p;
        let gain_denom = (&r + &btp * bd).try_inverse().expect("singular LQR denominator");
        let k = &gain_denom * &btp * ad;
        let acl = ad - bd * &k;
        let p_next = &q + k.transpose() * &r * &k + acl.transpose() * &p * &acl;
        let diff = (&p_next - &p).amax();
        p = p_next;
        if diff <= 1e-10 * p.amax().max(1.0) {
            break;
        }
    }
    let btp = bd.transpose() * &p;
    ((&r + &btp * bd).try_inverse().expect("singular LQR denominator") * &btp * ad)
        .view((0, 0), (nu, n))
        .into_owned()
}

/// Builds the stance feedback for a hopper pose: equilibrium, feed-forward
/// torque and the discrete LQR gain at the controller step.
pub fn hopper_stance_feedback(
    model: &dyn Model,
    hip: f64,
    knee: f64,
    contact: &ContactParams,
    dt_c: f64,
) -> (StanceEquilibrium, DMatrix<f64>) {
    let eq = hopper_stance_equilibrium(model, hip, knee, contact);
    let (ad, bd) = discretized_stance_linearization(model, &eq, contact, dt_c);
    // Weights: pitch and lateral drift matter most; height and joints track
    // the reference program loosely so the squat can move them.
    let q_weights = DVector::from_vec(vec![
        10.0, 2.0, 300.0, 5.0, 5.0, // q: x, z, pitch, hip, knee
        1.0, 1.0, 3.0, 0.2, 0.2, // v
    ]);
    let gain = dlqr(&ad, &bd, &q_weights, 0.5);
    (eq, gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::PlanarHopper;

    #[test]
    fn equilibrium_has_zero_acceleration_and_weight_on_the_foot() {
        let model = PlanarHopper::new(5.0, [0.5, 0.3], [0.25, 0.25]);
        let contact = ContactParams::new(1e5, 300.0, 1.0);
        let eq = hopper_stance_equilibrium(&model, 0.3, -0.6, &contact);
        let contacts = anchored_contact(&model, &eq.q, &contact);
        let state = RobotState::new(eq.q.clone(), DVector::zeros(5));
        let (_, acc) = continuous_dynamics(&model, &contacts, &state, &eq.tau);
        assert!(acc.amax() <= 1e-8, "residual acceleration {}", acc.amax());

        // Penetration carries the total weight.
        let kin = model.contact_kinematics(&eq.q, &DVector::zeros(5));
        let fz = -contact.stiffness * kin.positions[0].z;
        let weight = model.total_mass() * crate::mechanics::GRAVITY;
        assert!((fz - weight).abs() <= 1e-6 * weight);
    }

    #[test]
    fn lqr_gain_stabilizes_the_discrete_linearization() {
        let model = PlanarHopper::new(5.0, [0.5, 0.3], [0.25, 0.25]);
        let contact = ContactParams::new(1e5, 300.0, 1.0);
        let (eq, gain) = hopper_stance_feedback(&model, 0.3, -0.6, &contact, 0.010);
        let (ad, bd) = discretized_stance_linearization(&model, &eq, &contact, 0.010);
        let acl = &ad - &bd * &gain;
        let rho = acl
            .complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0_f64, f64::max);
        assert!(rho < 1.0, "closed-loop spectral radius {rho}");
    }
}
