//! A single point mass in 3D, the smallest contact-bearing system.

use nalgebra::{DMatrix, DVector, Vector3};

use super::{ContactKinematics, Model, ModelInfo, RobotState, GRAVITY};

/// Point mass with one contact point at the mass itself: q, v ∈ ℝ³, p = q,
/// J = I₃. Actuation is a direct world-frame force.
pub struct PointMass3D {
    info: ModelInfo,
    mass: f64,
}

impl PointMass3D {
    pub fn new(mass: f64) -> Self {
        assert!(mass > 0.0);
        Self {
            info: ModelInfo {
                nq: 3,
                nv: 3,
                nc: 1,
                nu: 3,
                contact_names: vec!["point".to_string()],
            },
            mass,
        }
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }
}

impl Model for PointMass3D {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn mass_matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(3, 3) * self.mass
    }

    fn nonlinear_and_actuation(
        &self,
        _q: &DVector<f64>,
        _v: &DVector<f64>,
        tau: &DVector<f64>,
    ) -> DVector<f64> {
        let mut u = tau.clone();
        u[2] -= self.mass * GRAVITY;
        u
    }

    fn contact_kinematics(&self, q: &DVector<f64>, v: &DVector<f64>) -> ContactKinematics {
        ContactKinematics {
            positions: vec![Vector3::new(q[0], q[1], q[2])],
            velocities: vec![Vector3::new(v[0], v[1], v[2])],
            jacobians: vec![DMatrix::identity(3, 3)],
            drifts: vec![Vector3::zeros()],
        }
    }

    fn integrate_configuration(&self, q: &DVector<f64>, dq: &DVector<f64>) -> DVector<f64> {
        q + dq
    }

    fn state_difference(&self, x1: &RobotState, x2: &RobotState) -> DVector<f64> {
        let mut out = DVector::zeros(6);
        out.rows_mut(0, 3).copy_from(&(&x1.q - &x2.q));
        out.rows_mut(3, 3).copy_from(&(&x1.v - &x2.v));
        out
    }

    fn kinetic_energy(&self, _q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        0.5 * self.mass * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    }

    fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        self.mass * GRAVITY * q[2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_mass_matrix() {
        let m = PointMass3D::new(1.0);
        assert_eq!(m.mass_matrix(&DVector::zeros(3)), DMatrix::identity(3, 3));
    }

    #[test]
    fn gravity_only_without_actuation() {
        let m = PointMass3D::new(2.5);
        let u = m.nonlinear_and_actuation(&DVector::zeros(3), &DVector::zeros(3), &DVector::zeros(3));
        assert_eq!(u[0], 0.0);
        assert_eq!(u[1], 0.0);
        assert_eq!(u[2], -2.5 * GRAVITY);
    }

    #[test]
    fn contact_point_is_the_mass() {
        let m = PointMass3D::new(1.0);
        let q = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let kin = m.contact_kinematics(&q, &v);
        assert_eq!(kin.positions[0], Vector3::new(0.1, -0.2, 0.3));
        assert_eq!(kin.velocities[0], Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(kin.drifts[0], Vector3::zeros());
    }
}
