//! Mechanical-system abstraction and the built-in desk-scale models.
//!
//! A [`Model`] provides everything the steppers need: the joint-space mass
//! matrix, the combined gravity/bias/actuation force, contact-point
//! kinematics against the ground plane z = 0, and configuration-manifold
//! helpers (`integrate_configuration` / `state_difference`) so models with a
//! quaternion base behave correctly under tangent-space updates.
//!
//! Conventions: SI units throughout, gravity along −z, quaternions stored
//! scalar-first, and free-body twists as (linear velocity in the world frame,
//! angular velocity in the body frame).

mod free_box;
mod hopper;
mod point_mass;

pub use free_box::FreeBox3D;
pub use hopper::PlanarHopper;
pub use point_mass::PointMass3D;

use nalgebra::{DMatrix, DVector, Vector3};

pub const GRAVITY: f64 = 9.81;

/// Configuration and generalized velocity of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl RobotState {
    pub fn new(q: DVector<f64>, v: DVector<f64>) -> Self {
        Self { q, v }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().all(|x| x.is_finite()) && self.v.iter().all(|x| x.is_finite())
    }
}

/// Static description of a model.
#[derive(Debug, Clone)]
pub struct ModelInfo {
    /// Configuration dimension (≥ nv when a quaternion block is present).
    pub nq: usize,
    /// Velocity / tangent dimension.
    pub nv: usize,
    /// Number of candidate contact points.
    pub nc: usize,
    /// Actuated dimension; torques map onto the last `nu` velocity coordinates.
    pub nu: usize,
    pub contact_names: Vec<String>,
}

/// Kinematics of every candidate contact point at one state.
#[derive(Debug, Clone)]
pub struct ContactKinematics {
    /// World positions p.
    pub positions: Vec<Vector3<f64>>,
    /// World velocities ṗ = J·v.
    pub velocities: Vec<Vector3<f64>>,
    /// 3×nv point Jacobians.
    pub jacobians: Vec<DMatrix<f64>>,
    /// Drift terms J̇·v, so that p̈ = J·v̇ + drift.
    pub drifts: Vec<Vector3<f64>>,
}

pub trait Model: Send + Sync {
    fn info(&self) -> &ModelInfo;

    /// Joint-space mass matrix M(q), symmetric positive definite.
    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;

    /// Combined force term u(q, v, τ) so that M·v̇ = u + Jᵀλ. Contains
    /// gravity, velocity-dependent effects, and the actuation τ mapped onto
    /// the actuated coordinates.
    fn nonlinear_and_actuation(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
        tau: &DVector<f64>,
    ) -> DVector<f64>;

    fn contact_kinematics(&self, q: &DVector<f64>, v: &DVector<f64>) -> ContactKinematics;

    /// Applies a tangent-space displacement `dq` (units: velocity · time) to
    /// the configuration. Euclidean coordinates add; a quaternion block
    /// composes with the exponential map of its angular displacement.
    fn integrate_configuration(&self, q: &DVector<f64>, dq: &DVector<f64>) -> DVector<f64>;

    /// Tangent-space difference x1 ⊖ x2, length 2·nv: configuration
    /// difference stacked over plain velocity difference.
    fn state_difference(&self, x1: &RobotState, x2: &RobotState) -> DVector<f64>;

    /// Kinetic energy, computed from point/body velocities directly (kept
    /// independent of `mass_matrix` so the two can cross-check each other).
    fn kinetic_energy(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64;

    fn potential_energy(&self, q: &DVector<f64>) -> f64;

    fn mechanical_energy(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.kinetic_energy(q, v) + self.potential_energy(q)
    }
}

/// Constructs a built-in model by name. Parameters are the defaults used by
/// the benchmark scenarios.
pub fn model_by_name(name: &str) -> Option<std::sync::Arc<dyn Model>> {
    match name {
        "point-mass" => Some(std::sync::Arc::new(PointMass3D::new(1.0))),
        "free-box" => Some(std::sync::Arc::new(FreeBox3D::new(
            10.0,
            Vector3::new(0.01, 0.01, 0.01),
            Vector3::new(0.1, 0.1, 0.05),
        ))),
        "planar-hopper" => Some(std::sync::Arc::new(PlanarHopper::new(
            5.0,
            [0.5, 0.3],
            [0.25, 0.25],
        ))),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn models() -> Vec<Box<dyn Model>> {
        vec![
            Box::new(PointMass3D::new(1.0)),
            Box::new(FreeBox3D::new(
                10.0,
                Vector3::new(0.1, 0.1, 0.1),
                Vector3::new(0.1, 0.1, 0.05),
            )),
            Box::new(PlanarHopper::new(5.0, [0.5, 0.3], [0.25, 0.25])),
        ]
    }

    fn random_state(rng: &mut ChaCha8Rng, model: &dyn Model) -> RobotState {
        let info = model.info();
        let mut q: DVector<f64> = DVector::from_fn(info.nq, |_, _| rng.random_range(-0.5..0.5));
        if info.nq == 7 {
            // Random unit quaternion block, scalar-first.
            let norm = (q[3] * q[3] + q[4] * q[4] + q[5] * q[5] + q[6] * q[6]).sqrt();
            if norm < 1e-6 {
                q[3] = 1.0;
            } else {
                for i in 3..7 {
                    q[i] /= norm;
                }
            }
        }
        let v = DVector::from_fn(info.nv, |_, _| rng.random_range(-1.0..1.0));
        RobotState::new(q, v)
    }

    #[test]
    fn mass_matrices_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in models() {
            for _ in 0..20 {
                let x = random_state(&mut rng, model.as_ref());
                let m = model.mass_matrix(&x.q);
                assert!((&m - m.transpose()).amax() <= 1e-12);
            }
        }
    }

    #[test]
    fn contact_velocity_equals_jacobian_times_v() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for model in models() {
            for _ in 0..100 {
                let x = random_state(&mut rng, model.as_ref());
                let kin = model.contact_kinematics(&x.q, &x.v);
                for (vel, jac) in kin.velocities.iter().zip(&kin.jacobians) {
                    assert!((vel - jac * &x.v).amax() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_velocity_perturbation() {
        // ṗ is linear in v, so (ṗ(q, v + hδ) − ṗ(q, v))/h recovers J·δ.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for model in models() {
            let x = random_state(&mut rng, model.as_ref());
            let info = model.info();
            let h = 1e-6;
            for k in 0..info.nv {
                let mut v_pert = x.v.clone();
                v_pert[k] += h;
                let kin0 = model.contact_kinematics(&x.q, &x.v);
                let kin1 = model.contact_kinematics(&x.q, &v_pert);
                for c in 0..info.nc {
                    let fd = (&kin1.velocities[c] - &kin0.velocities[c]) / h;
                    let col = kin0.jacobians[c].column(k);
                    assert!((fd - Vector3::new(col[0], col[1], col[2])).amax() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn drift_matches_finite_difference_of_velocity() {
        // d/dt ṗ at fixed v̇ = 0: advance q along v and compare J̇v with
        // (ṗ(q⁺, v) − ṗ(q, v))/h.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in models() {
            let x = random_state(&mut rng, model.as_ref());
            let h = 1e-7;
            let q_next = model.integrate_configuration(&x.q, &(&x.v * h));
            let kin0 = model.contact_kinematics(&x.q, &x.v);
            let kin1 = model.contact_kinematics(&q_next, &x.v);
            for c in 0..model.info().nc {
                let fd = (&kin1.velocities[c] - &kin0.velocities[c]) / h;
                assert!(
                    (fd - &kin0.drifts[c]).amax() <= 1e-5,
                    "{}: drift mismatch",
                    model.info().contact_names[c]
                );
            }
        }
    }

    #[test]
    fn mass_matrix_matches_kinetic_energy_hessian() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for model in models() {
            let x = random_state(&mut rng, model.as_ref());
            let info = model.info();
            let m = model.mass_matrix(&x.q);
            let h = 1e-4;
            for i in 0..info.nv {
                for j in 0..info.nv {
                    let mut vpp = x.v.clone();
                    let mut vpm = x.v.clone();
                    let mut vmp = x.v.clone();
                    let mut vmm = x.v.clone();
                    vpp[i] += h;
                    vpp[j] += h;
                    vpm[i] += h;
                    vpm[j] -= h;
                    vmp[i] -= h;
                    vmp[j] += h;
                    vmm[i] -= h;
                    vmm[j] -= h;
                    let hess = (model.kinetic_energy(&x.q, &vpp)
                        - model.kinetic_energy(&x.q, &vpm)
                        - model.kinetic_energy(&x.q, &vmp)
                        + model.kinetic_energy(&x.q, &vmm))
                        / (4.0 * h * h);
                    assert!(
                        (hess - m[(i, j)]).abs() <= 1e-6 * (1.0 + m[(i, j)].abs()),
                        "M[{i},{j}] = {} vs Hessian {}",
                        m[(i, j)],
                        hess
                    );
                }
            }
        }
    }

    #[test]
    fn integrate_difference_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for model in models() {
            let info = model.info();
            for _ in 0..20 {
                let x = random_state(&mut rng, model.as_ref());
                let delta = DVector::from_fn(info.nv, |_, _| rng.random_range(-0.5..0.5));
                let q_next = model.integrate_configuration(&x.q, &delta);
                let diff = model.state_difference(
                    &RobotState::new(q_next, x.v.clone()),
                    &RobotState::new(x.q.clone(), x.v.clone()),
                );
                for k in 0..info.nv {
                    assert_relative_eq!(diff[k], delta[k], epsilon = 1e-9, max_relative = 1e-9);
                }
                for k in 0..info.nv {
                    assert_eq!(diff[info.nv + k], 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_displacement_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for model in models() {
            let x = random_state(&mut rng, model.as_ref());
            let q = model.integrate_configuration(&x.q, &DVector::zeros(model.info().nv));
            assert_eq!(q, x.q);
            let diff = model.state_difference(&x, &x);
            assert_eq!(diff.amax(), 0.0);
        }
    }
}
