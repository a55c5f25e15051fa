//! Free-floating rigid box with four ground-contact corners.

use nalgebra::{DMatrix, DVector, Matrix3, Quaternion, UnitQuaternion, Vector3};

use super::{ContactKinematics, Model, ModelInfo, RobotState, GRAVITY};

/// Free rigid body: nq = 7 (position + scalar-first unit quaternion),
/// nv = 6 (world-frame linear velocity, body-frame angular velocity).
/// Contact candidates sit at the four bottom corners, the desk-scale analog
/// of a trunk standing on four feet. Actuation is an external wrench
/// (world-frame force, body-frame torque).
pub struct FreeBox3D {
    info: ModelInfo,
    mass: f64,
    inertia: Vector3<f64>,
    corners: [Vector3<f64>; 4],
}

impl FreeBox3D {
    pub fn new(mass: f64, inertia: Vector3<f64>, half_extents: Vector3<f64>) -> Self {
        assert!(mass > 0.0 && inertia.min() > 0.0 && half_extents.min() > 0.0);
        let (hx, hy, hz) = (half_extents.x, half_extents.y, half_extents.z);
        Self {
            info: ModelInfo {
                nq: 7,
                nv: 6,
                nc: 4,
                nu: 6,
                contact_names: ["corner-pp", "corner-pm", "corner-mp", "corner-mm"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            },
            mass,
            inertia,
            corners: [
                Vector3::new(hx, hy, -hz),
                Vector3::new(hx, -hy, -hz),
                Vector3::new(-hx, hy, -hz),
                Vector3::new(-hx, -hy, -hz),
            ],
        }
    }

    fn rotation(q: &DVector<f64>) -> UnitQuaternion<f64> {
        // The configuration invariant keeps the block unit-norm; skipping the
        // normalization here keeps zero-displacement updates exact.
        UnitQuaternion::new_unchecked(Quaternion::new(q[3], q[4], q[5], q[6]))
    }

    fn omega(v: &DVector<f64>) -> Vector3<f64> {
        Vector3::new(v[3], v[4], v[5])
    }
}

impl Model for FreeBox3D {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn mass_matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        // Linear velocity in world frame, angular in body frame: both blocks
        // are constant.
        let mut m = DMatrix::zeros(6, 6);
        for i in 0..3 {
            m[(i, i)] = self.mass;
            m[(3 + i, 3 + i)] = self.inertia[i];
        }
        m
    }

    fn nonlinear_and_actuation(
        &self,
        _q: &DVector<f64>,
        v: &DVector<f64>,
        tau: &DVector<f64>,
    ) -> DVector<f64> {
        let w = Self::omega(v);
        let gyro = w.cross(&self.inertia.component_mul(&w));
        let mut u = tau.clone();
        u[2] -= self.mass * GRAVITY;
        u[3] -= gyro.x;
        u[4] -= gyro.y;
        u[5] -= gyro.z;
        u
    }

    fn contact_kinematics(&self, q: &DVector<f64>, v: &DVector<f64>) -> ContactKinematics {
        let rot = Self::rotation(q);
        let r_mat = rot.to_rotation_matrix();
        let pos = Vector3::new(q[0], q[1], q[2]);
        let vlin = Vector3::new(v[0], v[1], v[2]);
        let w = Self::omega(v);

        let mut kin = ContactKinematics {
            positions: Vec::with_capacity(4),
            velocities: Vec::with_capacity(4),
            jacobians: Vec::with_capacity(4),
            drifts: Vec::with_capacity(4),
        };
        for r in &self.corners {
            let arm = r_mat * r;
            kin.positions.push(pos + arm);
            kin.velocities.push(vlin + r_mat * w.cross(r));
            // J = [I₃ | −R·skew(r)] so that J·v = v_lin + R(ω × r).
            let lever: Matrix3<f64> = r_mat.matrix() * (-skew(r));
            let mut j = DMatrix::zeros(3, 6);
            j.view_mut((0, 0), (3, 3)).copy_from(&Matrix3::identity());
            j.view_mut((0, 3), (3, 3)).copy_from(&lever);
            kin.jacobians.push(j);
            kin.drifts.push(r_mat * w.cross(&w.cross(r)));
        }
        kin
    }

    fn integrate_configuration(&self, q: &DVector<f64>, dq: &DVector<f64>) -> DVector<f64> {
        let mut out = q.clone();
        for i in 0..3 {
            out[i] += dq[i];
        }
        let rot = Self::rotation(q);
        let delta = UnitQuaternion::from_scaled_axis(Vector3::new(dq[3], dq[4], dq[5]));
        let next = rot * delta;
        let c = next.quaternion();
        out[3] = c.w;
        out[4] = c.i;
        out[5] = c.j;
        out[6] = c.k;
        // Renormalize once drift exceeds a few ulps, so repeated steps keep
        // the unit-norm invariant while an exact no-op stays bit-identical.
        let norm_sq = out[3] * out[3] + out[4] * out[4] + out[5] * out[5] + out[6] * out[6];
        if (norm_sq - 1.0).abs() > 1e-12 {
            let norm = norm_sq.sqrt();
            for i in 3..7 {
                out[i] /= norm;
            }
        }
        out
    }

    fn state_difference(&self, x1: &RobotState, x2: &RobotState) -> DVector<f64> {
        let mut out = DVector::zeros(12);
        for i in 0..3 {
            out[i] = x1.q[i] - x2.q[i];
        }
        let log = (Self::rotation(&x2.q).inverse() * Self::rotation(&x1.q)).scaled_axis();
        out[3] = log.x;
        out[4] = log.y;
        out[5] = log.z;
        for i in 0..6 {
            out[6 + i] = x1.v[i] - x2.v[i];
        }
        out
    }

    fn kinetic_energy(&self, _q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let w = Self::omega(v);
        0.5 * self.mass * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
            + 0.5 * w.dot(&self.inertia.component_mul(&w))
    }

    fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        self.mass * GRAVITY * q[2]
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn test_box() -> FreeBox3D {
        FreeBox3D::new(
            10.0,
            Vector3::new(0.1, 0.1, 0.1),
            Vector3::new(0.1, 0.1, 0.05),
        )
    }

    fn rest_state() -> RobotState {
        let mut q = DVector::zeros(7);
        q[2] = 0.3;
        q[3] = 1.0;
        RobotState::new(q, DVector::zeros(6))
    }

    #[test]
    fn mass_matrix_is_block_diagonal() {
        let b = test_box();
        let m = b.mass_matrix(&rest_state().q);
        for i in 0..3 {
            assert_eq!(m[(i, i)], 10.0);
            assert_eq!(m[(3 + i, 3 + i)], 0.1);
        }
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn at_rest_only_gravity_acts() {
        let b = test_box();
        let x = rest_state();
        let u = b.nonlinear_and_actuation(&x.q, &x.v, &DVector::zeros(6));
        assert_eq!(u[2], -10.0 * GRAVITY);
        for i in [0, 1, 3, 4, 5] {
            assert_eq!(u[i], 0.0);
        }
    }

    #[test]
    fn corner_jacobian_maps_twist_at_identity() {
        let b = test_box();
        let x = rest_state();
        let kin = b.contact_kinematics(&x.q, &x.v);
        let vlin = Vector3::new(0.3, -0.1, 0.2);
        let w = Vector3::new(0.5, 1.0, -0.7);
        let v = DVector::from_vec(vec![vlin.x, vlin.y, vlin.z, w.x, w.y, w.z]);
        for (j, r) in kin.jacobians.iter().zip(&b.corners) {
            let jv = j * &v;
            let expected = vlin + w.cross(r);
            assert_relative_eq!(jv[0], expected.x, epsilon = 1e-14);
            assert_relative_eq!(jv[1], expected.y, epsilon = 1e-14);
            assert_relative_eq!(jv[2], expected.z, epsilon = 1e-14);
        }
        // Corner positions are base + offset at identity orientation.
        assert_relative_eq!(kin.positions[0].z, 0.3 - 0.05, epsilon = 1e-14);
    }

    #[test]
    fn quaternion_exponential_map_closed_form() {
        let b = test_box();
        let x = rest_state();
        let mut dq = DVector::zeros(6);
        dq[3] = 0.2 * std::f64::consts::PI;
        let q = b.integrate_configuration(&x.q, &dq);
        assert_relative_eq!(q[3], (0.1 * std::f64::consts::PI).cos(), epsilon = 1e-14);
        assert_relative_eq!(q[4], (0.1 * std::f64::consts::PI).sin(), epsilon = 1e-14);
        assert_eq!(q[5], 0.0);
        assert_eq!(q[6], 0.0);
    }

    #[test]
    fn quaternion_norm_preserved_per_call() {
        let b = test_box();
        let mut q = rest_state().q;
        let dq = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.3, -0.4, 0.5]);
        for _ in 0..1000 {
            q = b.integrate_configuration(&q, &dq);
            let norm = (q[3] * q[3] + q[4] * q[4] + q[5] * q[5] + q[6] * q[6]).sqrt();
            assert!((norm - 1.0).abs() <= 1e-12);
        }
    }
}
