//! Visco-elastic contact with a flat ground at z = 0.
//!
//! Each candidate contact point carries a virtual anchor `(p0, ṗ0)` to which
//! a spring-damper is attached. The anchor is planted where the point first
//! crosses the ground and stays put while the contact sticks; when the
//! friction cone clips the force, the tangential anchor state is dragged
//! along so the spring force lands back on the cone boundary.
//!
//! With a flat ground the world frame is the contact frame: z is the normal,
//! x/y the tangent plane.

use nalgebra::Vector3;

use crate::mechanics::ContactKinematics;

/// Per-point contact state and parameters.
#[derive(Debug, Clone)]
pub struct ContactPointState {
    pub active: bool,
    /// Anchor position p0 (m).
    pub anchor_pos: Vector3<f64>,
    /// Anchor velocity ṗ0 (m/s); nonzero only while slipping.
    pub anchor_vel: Vector3<f64>,
    /// Stiffness diagonal K (N/m), componentwise positive.
    pub stiffness: Vector3<f64>,
    /// Damping diagonal B (N·s/m), componentwise non-negative.
    pub damping: Vector3<f64>,
    /// Coulomb friction coefficient μ ≥ 0 (static = dynamic).
    pub friction: f64,
}

impl ContactPointState {
    /// Inactive point with isotropic stiffness/damping.
    pub fn new(stiffness: f64, damping: f64, friction: f64) -> Self {
        assert!(stiffness > 0.0 && damping >= 0.0 && friction >= 0.0);
        Self {
            active: false,
            anchor_pos: Vector3::zeros(),
            anchor_vel: Vector3::zeros(),
            stiffness: Vector3::from_element(stiffness),
            damping: Vector3::from_element(damping),
            friction,
        }
    }
}

/// Result of a friction-cone test: whether the force was admissible, and its
/// projection onto the cone.
#[derive(Debug, Clone)]
pub struct FrictionConeCheck {
    pub inside: bool,
    pub projected: Vector3<f64>,
}

/// Activates points that crossed below the ground and deactivates points that
/// left it. A fresh activation plants the anchor at the ground piercing point
/// `(p_x, p_y, 0)` with zero anchor velocity.
pub fn detect_and_update(kin: &ContactKinematics, contacts: &mut [ContactPointState]) {
    debug_assert_eq!(kin.positions.len(), contacts.len());
    for (cp, p) in contacts.iter_mut().zip(&kin.positions) {
        if !cp.active && p.z < 0.0 {
            cp.active = true;
            cp.anchor_pos = Vector3::new(p.x, p.y, 0.0);
            cp.anchor_vel = Vector3::zeros();
        } else if cp.active && p.z > 0.0 {
            cp.active = false;
        }
    }
}

/// Spring-damper force λ = −K∘(p − p0) − B∘(ṗ − ṗ0).
pub fn spring_damper_force(
    cp: &ContactPointState,
    p: &Vector3<f64>,
    pdot: &Vector3<f64>,
) -> Vector3<f64> {
    debug_assert!(cp.active);
    -cp.stiffness.component_mul(&(p - cp.anchor_pos))
        - cp.damping.component_mul(&(pdot - cp.anchor_vel))
}

/// Projection onto the friction cone f_z ≥ 0, ‖(f_x, f_y)‖ ≤ μ f_z.
///
/// Pulling forces are zeroed; out-of-cone tangentials are rescaled onto the
/// boundary with the normal component kept, which is what the averaged-force
/// updates rely on.
pub fn project_friction_cone(force: &Vector3<f64>, mu: f64) -> FrictionConeCheck {
    if force.z < 0.0 {
        return FrictionConeCheck {
            inside: false,
            projected: Vector3::zeros(),
        };
    }
    let tangential = (force.x * force.x + force.y * force.y).sqrt();
    let limit = mu * force.z;
    if tangential <= limit {
        FrictionConeCheck {
            inside: true,
            projected: *force,
        }
    } else {
        let scale = if tangential > 0.0 { limit / tangential } else { 0.0 };
        FrictionConeCheck {
            inside: false,
            projected: Vector3::new(force.x * scale, force.y * scale, force.z),
        }
    }
}

/// Slip reset of the anchor: the tangential anchor velocity snaps to the
/// point's tangential velocity and the tangential anchor position is placed
/// so the spring reproduces `projected` exactly, p0ᵗ = pᵗ + (Kᵗ)⁻¹λᵗ. The
/// normal components are left alone.
pub fn anchor_slip_update(
    cp: &mut ContactPointState,
    p: &Vector3<f64>,
    pdot: &Vector3<f64>,
    projected: &Vector3<f64>,
) {
    debug_assert!(cp.active);
    cp.anchor_pos.x = p.x + projected.x / cp.stiffness.x;
    cp.anchor_pos.y = p.y + projected.y / cp.stiffness.y;
    cp.anchor_vel.x = pdot.x;
    cp.anchor_vel.y = pdot.y;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanics::{Model, PointMass3D};
    use nalgebra::DVector;
    use proptest::prelude::*;

    fn kin_at(p: Vector3<f64>) -> ContactKinematics {
        let m = PointMass3D::new(1.0);
        m.contact_kinematics(
            &DVector::from_vec(vec![p.x, p.y, p.z]),
            &DVector::zeros(3),
        )
    }

    #[test]
    fn activation_plants_anchor_on_the_ground() {
        let mut contacts = vec![ContactPointState::new(1e5, 300.0, 1.0)];
        detect_and_update(&kin_at(Vector3::new(0.1, 0.0, -0.001)), &mut contacts);
        assert!(contacts[0].active);
        assert_eq!(contacts[0].anchor_pos, Vector3::new(0.1, 0.0, 0.0));
        assert_eq!(contacts[0].anchor_vel, Vector3::zeros());
    }

    #[test]
    fn departure_deactivates() {
        let mut contacts = vec![ContactPointState::new(1e5, 300.0, 1.0)];
        contacts[0].active = true;
        detect_and_update(&kin_at(Vector3::new(0.0, 0.0, 0.002)), &mut contacts);
        assert!(!contacts[0].active);
    }

    #[test]
    fn point_above_ground_stays_inactive() {
        let mut contacts = vec![ContactPointState::new(1e5, 300.0, 1.0)];
        detect_and_update(&kin_at(Vector3::new(0.0, 0.0, 0.5)), &mut contacts);
        assert!(!contacts[0].active);
    }

    #[test]
    fn spring_damper_arithmetic() {
        let mut cp = ContactPointState::new(1e5, 300.0, 1.0);
        cp.active = true;
        let f = spring_damper_force(&cp, &Vector3::new(0.0, 0.0, -0.001), &Vector3::zeros());
        assert_eq!(f, Vector3::new(0.0, 0.0, 100.0));

        let f = spring_damper_force(
            &cp,
            &Vector3::new(0.0, 0.0, -0.001),
            &Vector3::new(0.0, 0.0, -0.1),
        );
        assert_eq!(f.z, 100.0 + 30.0);

        let f = spring_damper_force(&cp, &Vector3::new(0.002, 0.0, -0.001), &Vector3::zeros());
        assert_eq!(f, Vector3::new(-200.0, 0.0, 100.0));
    }

    #[test]
    fn cone_projection_examples() {
        let inside = project_friction_cone(&Vector3::new(0.5, 0.0, 1.0), 1.0);
        assert!(inside.inside);
        assert_eq!(inside.projected, Vector3::new(0.5, 0.0, 1.0));

        let clipped = project_friction_cone(&Vector3::new(6.0, 8.0, 5.0), 1.0);
        assert!(!clipped.inside);
        assert!((clipped.projected - Vector3::new(3.0, 4.0, 5.0)).amax() <= 1e-12);

        let pulling = project_friction_cone(&Vector3::new(1.0, 0.0, -2.0), 1.0);
        assert!(!pulling.inside);
        assert_eq!(pulling.projected, Vector3::zeros());
    }

    #[test]
    fn anchor_reset_examples() {
        let mut cp = ContactPointState::new(1e5, 300.0, 1.0);
        cp.active = true;
        let p = Vector3::new(0.01, 0.0, -0.001);
        let pdot = Vector3::new(0.2, 0.0, 0.0);
        anchor_slip_update(&mut cp, &p, &pdot, &Vector3::new(-50.0, 0.0, 80.0));
        assert_eq!(cp.anchor_pos.x, 0.01 - 5.0e-4);
        assert_eq!(cp.anchor_vel.x, 0.2);
        assert_eq!(cp.anchor_vel.y, 0.0);
        // Normal components untouched.
        assert_eq!(cp.anchor_pos.z, 0.0);
        assert_eq!(cp.anchor_vel.z, 0.0);

        // Zero tangential force snaps the anchor onto the point.
        anchor_slip_update(&mut cp, &p, &pdot, &Vector3::new(0.0, 0.0, 80.0));
        assert_eq!(cp.anchor_pos.x, p.x);
        assert_eq!(cp.anchor_pos.y, p.y);
    }

    #[test]
    fn reset_anchor_reproduces_projected_tangential_force() {
        let mut cp = ContactPointState::new(1e5, 300.0, 0.7);
        cp.active = true;
        cp.anchor_pos = Vector3::new(-0.004, 0.002, 0.0);
        let p = Vector3::new(0.013, -0.007, -0.0008);
        let pdot = Vector3::new(0.35, -0.12, 0.02);
        let raw = spring_damper_force(&cp, &p, &pdot);
        let proj = project_friction_cone(&raw, cp.friction).projected;
        anchor_slip_update(&mut cp, &p, &pdot, &proj);
        let after = spring_damper_force(&cp, &p, &pdot);
        assert!((after.x - proj.x).abs() <= 1e-12);
        assert!((after.y - proj.y).abs() <= 1e-12);
    }

    #[test]
    fn slip_mismatch_decays_at_stiffness_over_damping_rate() {
        // While sliding on the cone boundary with a constant normal force,
        // d/dt λᵗ = 0 forces p̈0 = p̈ + (K/B)(ṗ − ṗ0), so the mismatch
        // e = ṗ0 − ṗ obeys ė = −(K/B)e for a block at constant velocity.
        // Integrate that with fine RK4 and check the decay after 3 ms.
        let k_over_b = 1e3 / 3.0;
        let mut e: f64 = 0.25;
        let e0 = e;
        let h = 1e-7;
        let steps = (3e-3 / h) as usize;
        for _ in 0..steps {
            let k1 = -k_over_b * e;
            let k2 = -k_over_b * (e + 0.5 * h * k1);
            let k3 = -k_over_b * (e + 0.5 * h * k2);
            let k4 = -k_over_b * (e + h * k3);
            e += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!(e / e0 <= 0.40, "mismatch ratio {}", e / e0);
        assert!(e / e0 > 0.0);
    }

    proptest! {
        #[test]
        fn projected_forces_satisfy_cone_constraints(
            fx in -50.0..50.0f64,
            fy in -50.0..50.0f64,
            fz in -50.0..50.0f64,
            mu in 0.0..3.0f64,
        ) {
            let out = project_friction_cone(&Vector3::new(fx, fy, fz), mu).projected;
            prop_assert!(out.z >= 0.0);
            prop_assert!((out.x * out.x + out.y * out.y).sqrt() <= mu * out.z + 1e-12);
        }

        #[test]
        fn projection_is_idempotent(
            fx in -50.0..50.0f64,
            fy in -50.0..50.0f64,
            fz in -50.0..50.0f64,
            mu in 0.0..3.0f64,
        ) {
            let once = project_friction_cone(&Vector3::new(fx, fy, fz), mu).projected;
            let twice = project_friction_cone(&once, mu).projected;
            prop_assert!((twice - once).amax() <= 1e-12);
        }

        #[test]
        fn forces_inside_the_cone_pass_through_exactly(
            dir in 0.0..std::f64::consts::TAU,
            frac in 0.0..1.0f64,
            fz in 0.0..50.0f64,
            mu in 0.0..3.0f64,
        ) {
            let t = frac * mu * fz;
            let f = Vector3::new(t * dir.cos(), t * dir.sin(), fz);
            let out = project_friction_cone(&f, mu);
            prop_assert!(out.inside);
            prop_assert_eq!(out.projected, f);
        }
    }
}
