//! Planar one-legged hopper: floating base (x, z, pitch) plus two actuated
//! revolute joints (hip, knee), with the contact point at the foot tip.
//!
//! Link masses are lumped at the distal ends, so the foot carries a small
//! apparent mass, which is what makes the contact dynamics stiff in practice.
//! The model lives in the x–z plane and is embedded in 3D for contact
//! handling (world y components are identically zero).

use nalgebra::{DMatrix, DVector, SMatrix, Vector2, Vector3};

use super::{ContactKinematics, Model, ModelInfo, RobotState, GRAVITY};

type Jac = SMatrix<f64, 2, 5>;

/// q = v = (x, z, pitch, hip, knee). Leg direction angle 0 points straight
/// down; the hip is co-located with the base center of mass.
pub struct PlanarHopper {
    info: ModelInfo,
    body_mass: f64,
    link_masses: [f64; 2],
    link_lengths: [f64; 2],
    base_inertia: f64,
}

impl PlanarHopper {
    pub fn new(body_mass: f64, link_masses: [f64; 2], link_lengths: [f64; 2]) -> Self {
        assert!(body_mass > 0.0);
        assert!(link_masses.iter().all(|&m| m > 0.0));
        assert!(link_lengths.iter().all(|&l| l > 0.0));
        Self {
            info: ModelInfo {
                nq: 5,
                nv: 5,
                nc: 1,
                nu: 2,
                contact_names: vec!["foot".to_string()],
            },
            body_mass,
            link_masses,
            link_lengths,
            // Body treated as a solid disk of radius 0.2 m for pitch inertia.
            base_inertia: 0.5 * body_mass * 0.2 * 0.2,
        }
    }

    /// Total weight, handy for choosing equilibrium penetrations in scenarios.
    pub fn total_mass(&self) -> f64 {
        self.body_mass + self.link_masses[0] + self.link_masses[1]
    }

    fn angles(q: &DVector<f64>) -> (f64, f64) {
        let a1 = q[2] + q[3];
        (a1, a1 + q[4])
    }

    /// Jacobians of the two link-tip masses (the second is also the foot).
    fn tip_jacobians(&self, q: &DVector<f64>) -> (Jac, Jac) {
        let (a1, a2) = Self::angles(q);
        let (s1, c1) = a1.sin_cos();
        let (s2, c2) = a2.sin_cos();
        let l1 = self.link_lengths[0];
        let l2 = self.link_lengths[1];
        let j1 = Jac::from_rows(&[
            [1.0, 0.0, l1 * c1, l1 * c1, 0.0].into(),
            [0.0, 1.0, l1 * s1, l1 * s1, 0.0].into(),
        ]);
        let j2 = Jac::from_rows(&[
            [
                1.0,
                0.0,
                l1 * c1 + l2 * c2,
                l1 * c1 + l2 * c2,
                l2 * c2,
            ]
            .into(),
            [
                0.0,
                1.0,
                l1 * s1 + l2 * s2,
                l1 * s1 + l2 * s2,
                l2 * s2,
            ]
            .into(),
        ]);
        (j1, j2)
    }

    /// Centripetal terms J̇ᵢ·v of the two tips.
    fn tip_drifts(&self, q: &DVector<f64>, v: &DVector<f64>) -> (Vector2<f64>, Vector2<f64>) {
        let (a1, a2) = Self::angles(q);
        let (s1, c1) = a1.sin_cos();
        let (s2, c2) = a2.sin_cos();
        let w1 = v[2] + v[3];
        let w2 = w1 + v[4];
        let d1 = self.link_lengths[0] * w1 * w1 * Vector2::new(-s1, c1);
        let d2 = d1 + self.link_lengths[1] * w2 * w2 * Vector2::new(-s2, c2);
        (d1, d2)
    }
}

impl Model for PlanarHopper {
    fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let (j1, j2) = self.tip_jacobians(q);
        let m1 = self.link_masses[0] * j1.transpose() * j1;
        let m2 = self.link_masses[1] * j2.transpose() * j2;
        let mut m = DMatrix::zeros(5, 5);
        for i in 0..5 {
            for j in 0..5 {
                m[(i, j)] = m1[(i, j)] + m2[(i, j)];
            }
        }
        m[(0, 0)] += self.body_mass;
        m[(1, 1)] += self.body_mass;
        m[(2, 2)] += self.base_inertia;
        m
    }

    fn nonlinear_and_actuation(
        &self,
        q: &DVector<f64>,
        v: &DVector<f64>,
        tau: &DVector<f64>,
    ) -> DVector<f64> {
        let (j1, j2) = self.tip_jacobians(q);
        let (d1, d2) = self.tip_drifts(q, v);
        let grav = Vector2::new(0.0, -GRAVITY);
        // M v̇ = u + Jᵀλ with u = Sτ + Σᵢ mᵢ Jᵢᵀ(g − J̇ᵢv).
        let bias1 = self.link_masses[0] * j1.transpose() * (grav - d1);
        let bias2 = self.link_masses[1] * j2.transpose() * (grav - d2);
        let mut u = DVector::zeros(5);
        for i in 0..5 {
            u[i] = bias1[i] + bias2[i];
        }
        u[1] -= self.body_mass * GRAVITY;
        u[3] += tau[0];
        u[4] += tau[1];
        u
    }

    fn contact_kinematics(&self, q: &DVector<f64>, v: &DVector<f64>) -> ContactKinematics {
        let (a1, a2) = Self::angles(q);
        let l1 = self.link_lengths[0];
        let l2 = self.link_lengths[1];
        let foot = Vector2::new(
            q[0] + l1 * a1.sin() + l2 * a2.sin(),
            q[1] - l1 * a1.cos() - l2 * a2.cos(),
        );
        let (_, j2) = self.tip_jacobians(q);
        let (_, d2) = self.tip_drifts(q, v);
        let vel = j2 * SMatrix::<f64, 5, 1>::from_iterator(v.iter().copied());

        let mut jac = DMatrix::zeros(3, 5);
        for k in 0..5 {
            jac[(0, k)] = j2[(0, k)];
            jac[(2, k)] = j2[(1, k)];
        }
        ContactKinematics {
            positions: vec![Vector3::new(foot.x, 0.0, foot.y)],
            velocities: vec![Vector3::new(vel[0], 0.0, vel[1])],
            jacobians: vec![jac],
            drifts: vec![Vector3::new(d2.x, 0.0, d2.y)],
        }
    }

    fn integrate_configuration(&self, q: &DVector<f64>, dq: &DVector<f64>) -> DVector<f64> {
        q + dq
    }

    fn state_difference(&self, x1: &RobotState, x2: &RobotState) -> DVector<f64> {
        let mut out = DVector::zeros(10);
        out.rows_mut(0, 5).copy_from(&(&x1.q - &x2.q));
        out.rows_mut(5, 5).copy_from(&(&x1.v - &x2.v));
        out
    }

    fn kinetic_energy(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let (a1, a2) = Self::angles(q);
        let w1 = v[2] + v[3];
        let w2 = w1 + v[4];
        let l1 = self.link_lengths[0];
        let l2 = self.link_lengths[1];
        let v1 = Vector2::new(v[0] + l1 * w1 * a1.cos(), v[1] + l1 * w1 * a1.sin());
        let v2 = Vector2::new(v1.x + l2 * w2 * a2.cos(), v1.y + l2 * w2 * a2.sin());
        0.5 * self.body_mass * (v[0] * v[0] + v[1] * v[1])
            + 0.5 * self.base_inertia * v[2] * v[2]
            + 0.5 * self.link_masses[0] * v1.norm_squared()
            + 0.5 * self.link_masses[1] * v2.norm_squared()
    }

    fn potential_energy(&self, q: &DVector<f64>) -> f64 {
        let (a1, a2) = Self::angles(q);
        let z1 = q[1] - self.link_lengths[0] * a1.cos();
        let z2 = z1 - self.link_lengths[1] * a2.cos();
        GRAVITY * (self.body_mass * q[1] + self.link_masses[0] * z1 + self.link_masses[1] * z2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hopper() -> PlanarHopper {
        PlanarHopper::new(5.0, [0.5, 0.3], [0.25, 0.25])
    }

    fn random_state(rng: &mut ChaCha8Rng) -> RobotState {
        RobotState::new(
            DVector::from_fn(5, |_, _| rng.random_range(-0.8..0.8)),
            DVector::from_fn(5, |_, _| rng.random_range(-1.5..1.5)),
        )
    }

    #[test]
    fn foot_position_straight_leg() {
        let h = hopper();
        let q = DVector::from_vec(vec![0.2, 0.6, 0.0, 0.0, 0.0]);
        let kin = h.contact_kinematics(&q, &DVector::zeros(5));
        assert!((kin.positions[0] - Vector3::new(0.2, 0.0, 0.1)).amax() < 1e-14);
    }

    /// Euler–Lagrange residual with all derivatives of T and V taken by
    /// finite differences of the energies; exercises mass_matrix and the
    /// bias terms together. d/dt(∂T/∂v) is expanded by the chain rule as
    /// T_vq·v + T_vv·v̇, with mixed partials from the four-point stencil and
    /// Richardson extrapolation to kill the O(h²) truncation.
    #[test]
    fn dynamics_satisfy_euler_lagrange() {
        let h = hopper();
        let mut rng = ChaCha8Rng::seed_from_u64(29);

        // ∂²f/∂a_i∂b_j by the 4-point stencil at step hh, where a/b pick the
        // q or v slot of f(q, v).
        fn mixed<F: Fn(&DVector<f64>, &DVector<f64>) -> f64>(
            f: &F,
            q: &DVector<f64>,
            v: &DVector<f64>,
            i_on_q: bool,
            i: usize,
            j_on_q: bool,
            j: usize,
            hh: f64,
        ) -> f64 {
            let eval = |si: f64, sj: f64| {
                let mut q = q.clone();
                let mut v = v.clone();
                if i_on_q {
                    q[i] += si;
                } else {
                    v[i] += si;
                }
                if j_on_q {
                    q[j] += sj;
                } else {
                    v[j] += sj;
                }
                f(&q, &v)
            };
            (eval(hh, hh) - eval(hh, -hh) - eval(-hh, hh) + eval(-hh, -hh)) / (4.0 * hh * hh)
        }

        for _ in 0..10 {
            let x = random_state(&mut rng);
            let tau =
                DVector::from_vec(vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
            let u = h.nonlinear_and_actuation(&x.q, &x.v, &tau);
            let m = h.mass_matrix(&x.q);
            let vdot = m.clone().lu().solve(&u).unwrap();

            let t_at = |q: &DVector<f64>, v: &DVector<f64>| h.kinetic_energy(q, v);
            let richardson = |i_on_q: bool, i: usize, j_on_q: bool, j: usize| {
                let h1 = 1e-3;
                let d1 = mixed(&t_at, &x.q, &x.v, i_on_q, i, j_on_q, j, h1);
                let d2 = mixed(&t_at, &x.q, &x.v, i_on_q, i, j_on_q, j, h1 / 2.0);
                (4.0 * d2 - d1) / 3.0
            };

            // d/dt ∂T/∂v = T_vq·q̇ + T_vv·v̇ with q̇ = v.
            let dp_dt = DVector::from_fn(5, |i, _| {
                let mut sum = 0.0;
                for j in 0..5 {
                    sum += richardson(false, i, true, j) * x.v[j]
                        + richardson(false, i, false, j) * vdot[j];
                }
                sum
            });

            let dl_dq = DVector::from_fn(5, |k, _| {
                let lagrangian = |q: &DVector<f64>| t_at(q, &x.v) - h.potential_energy(q);
                let h1 = 1e-4;
                let central = |hh: f64| {
                    let mut qp = x.q.clone();
                    let mut qm = x.q.clone();
                    qp[k] += hh;
                    qm[k] -= hh;
                    (lagrangian(&qp) - lagrangian(&qm)) / (2.0 * hh)
                };
                (4.0 * central(h1 / 2.0) - central(h1)) / 3.0
            });
            let mut gen_force = DVector::zeros(5);
            gen_force[3] = tau[0];
            gen_force[4] = tau[1];

            let residual = dp_dt - dl_dq - gen_force;
            assert!(
                residual.amax() <= 1e-6,
                "Euler-Lagrange residual {}",
                residual.amax()
            );
        }
    }

    #[test]
    fn energy_conserved_in_free_fall() {
        // No contact, no actuation: RK4 at a fine step conserves energy.
        let h = hopper();
        let mut q = DVector::from_vec(vec![0.0, 2.0, 0.1, 0.3, -0.5]);
        let mut v = DVector::from_vec(vec![0.2, 0.0, 0.4, -0.3, 0.6]);
        let e0 = h.mechanical_energy(&q, &v);
        let dt = 1e-5;
        let accel = |q: &DVector<f64>, v: &DVector<f64>| {
            let u = h.nonlinear_and_actuation(q, v, &DVector::zeros(2));
            h.mass_matrix(q).lu().solve(&u).unwrap()
        };
        for _ in 0..50_000 {
            let k1q = v.clone();
            let k1v = accel(&q, &v);
            let k2q = &v + 0.5 * dt * &k1v;
            let k2v = accel(&(&q + 0.5 * dt * &k1q), &k2q);
            let k3q = &v + 0.5 * dt * &k2v;
            let k3v = accel(&(&q + 0.5 * dt * &k2q), &k3q);
            let k4q = &v + dt * &k3v;
            let k4v = accel(&(&q + dt * &k3q), &k4q);
            q += dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
            v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        let drift = (h.mechanical_energy(&q, &v) - e0).abs() / e0.abs();
        assert!(drift <= 1e-6, "energy drift {drift}");
    }
}
