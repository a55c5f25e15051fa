//! Benchmark scenarios: model + controller + contact parameters + schedule.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::contact::ContactPointState;
use crate::mechanics::{FreeBox3D, Model, PlanarHopper, PointMass3D, RobotState, GRAVITY};

use super::balance::{hopper_stance_equilibrium, hopper_stance_feedback};

/// Isotropic contact parameters shared by every candidate point of a run.
#[derive(Debug, Clone, Copy)]
pub struct ContactParams {
    /// Stiffness K (N/m).
    pub stiffness: f64,
    /// Damping B (N·s/m).
    pub damping: f64,
    /// Friction coefficient μ.
    pub friction: f64,
}

impl ContactParams {
    pub fn new(stiffness: f64, damping: f64, friction: f64) -> Self {
        Self {
            stiffness,
            damping,
            friction,
        }
    }

    /// From a damping ratio ξ: B = 2ξ√K (ξ = 1 is critically damped).
    pub fn from_damping_ratio(stiffness: f64, ratio: f64, friction: f64) -> Self {
        Self {
            stiffness,
            damping: 2.0 * ratio * stiffness.sqrt(),
            friction,
        }
    }

    pub fn damping_ratio(&self) -> f64 {
        self.damping / (2.0 * self.stiffness.sqrt())
    }
}

/// Time program offsetting a feedback reference. The stored vectors match
/// whatever the owning controller modulates: joint setpoints for the PD,
/// full configurations for the state feedback.
#[derive(Debug, Clone)]
pub enum ReferenceProgram {
    Hold,
    /// Offset by amplitude·sin(2πt/period).
    Sinusoid { amplitude: DVector<f64>, period: f64 },
    /// Alternate between two offsets each half period.
    Square {
        first: DVector<f64>,
        second: DVector<f64>,
        period: f64,
    },
    /// Apply an offset during [start, start + width), hold otherwise.
    Pulse {
        offsets: DVector<f64>,
        start: f64,
        width: f64,
    },
}

impl ReferenceProgram {
    /// Additive offset at time t, or `None` when holding.
    fn offsets(&self, t: f64) -> Option<DVector<f64>> {
        match self {
            ReferenceProgram::Hold => None,
            ReferenceProgram::Sinusoid { amplitude, period } => {
                Some(amplitude * (std::f64::consts::TAU * t / period).sin())
            }
            ReferenceProgram::Square {
                first,
                second,
                period,
            } => {
                if (t / (period / 2.0)) as u64 % 2 == 0 {
                    Some(first.clone())
                } else {
                    Some(second.clone())
                }
            }
            ReferenceProgram::Pulse {
                offsets,
                start,
                width,
            } => (t >= *start && t < start + width).then(|| offsets.clone()),
        }
    }
}

/// Feedback law evaluated at controller ticks and held constant in between.
#[derive(Debug, Clone)]
pub enum Controller {
    /// τ = 0.
    Passive,
    /// Constant generalized force on the actuated coordinates.
    ConstantWrench(DVector<f64>),
    /// Joint-space PD toward a (possibly time-varying) setpoint:
    /// τ = kp∘(q_des(t) − q_act) − kd∘v_act on the last nu coordinates.
    JointPd {
        setpoint: DVector<f64>,
        program: ReferenceProgram,
        kp: DVector<f64>,
        kd: DVector<f64>,
    },
    /// Linear state feedback about a reference state during stance:
    /// τ = τ_ff − gain · (x ⊖ x_ref(t)), with the reference configuration
    /// driven by the program. In flight (no active contact) it falls back to
    /// a joint PD that swings the leg toward the landing pose, with the hip
    /// target placing the foot along the travel direction
    /// (foot_placement_gain · ẋ, compensated for body pitch) so each landing
    /// corrects the lean. Used by the hopper scenarios, where a point foot
    /// makes standing an unstable balance problem. Torques saturate at
    /// tau_limit.
    StateFeedback {
        q_ref: DVector<f64>,
        tau_ff: DVector<f64>,
        /// nu × 2nv gain on the tangent-space state difference.
        gain: DMatrix<f64>,
        program: ReferenceProgram,
        flight_kp: DVector<f64>,
        flight_kd: DVector<f64>,
        foot_placement_gain: f64,
        tau_limit: f64,
        /// One-shot open-loop torque added during [t0, t0 + width): the
        /// push-off thrust of the hop scenario.
        thrust: Option<(f64, f64, DVector<f64>)>,
    },
}

impl Controller {
    pub fn torque(
        &self,
        t: f64,
        model: &dyn Model,
        state: &RobotState,
        contacts: &[ContactPointState],
    ) -> DVector<f64> {
        let info = model.info();
        match self {
            Controller::Passive => DVector::zeros(info.nu),
            Controller::ConstantWrench(w) => w.clone(),
            Controller::JointPd {
                setpoint,
                program,
                kp,
                kd,
            } => {
                let mut q_des = setpoint.clone();
                if let Some(off) = program.offsets(t) {
                    q_des += off;
                }
                let nq = state.q.len();
                let nv = state.v.len();
                DVector::from_fn(info.nu, |i, _| {
                    kp[i] * (q_des[i] - state.q[nq - info.nu + i])
                        - kd[i] * state.v[nv - info.nu + i]
                })
            }
            Controller::StateFeedback {
                q_ref,
                tau_ff,
                gain,
                program,
                flight_kp,
                flight_kd,
                foot_placement_gain,
                tau_limit,
                thrust,
            } => {
                let mut tau = if contacts.iter().any(|c| c.active) {
                    let mut q_target = q_ref.clone();
                    if let Some(off) = program.offsets(t) {
                        q_target += off;
                    }
                    let reference = RobotState::new(q_target, DVector::zeros(info.nv));
                    let diff = model.state_difference(state, &reference);
                    tau_ff - gain * diff
                } else {
                    // Flight: fold the leg into the reference (balanced)
                    // pose in world coordinates — the hip compensates the
                    // pitch error so the foot lands under the center of
                    // mass, plus a placement lead along the travel
                    // direction.
                    let nq = state.q.len();
                    let knee_target = q_ref[nq - 1];
                    let hip_target = q_ref[nq - 2] + (q_ref[2] - state.q[2])
                        + foot_placement_gain * state.v[0];
                    let targets = [hip_target, knee_target];
                    DVector::from_fn(info.nu, |i, _| {
                        flight_kp[i] * (targets[i] - state.q[nq - info.nu + i])
                            - flight_kd[i] * state.v[3 + i]
                    })
                };
                if let Some((t0, width, bias)) = thrust {
                    if t >= *t0 && t < t0 + width {
                        tau += bias;
                    }
                }
                for i in 0..info.nu {
                    tau[i] = tau[i].clamp(-*tau_limit, *tau_limit);
                }
                tau
            }
        }
    }
}

/// A complete benchmark setup.
#[derive(Clone)]
pub struct Scenario {
    pub id: String,
    pub model: Arc<dyn Model>,
    pub initial_state: RobotState,
    pub controller: Controller,
    pub contact: ContactParams,
    /// Total simulated time (s).
    pub duration: f64,
    /// Controller step dt_c (s); torques are zero-order-held over it.
    pub dt_c: f64,
}

impl Scenario {
    pub fn fresh_contacts(&self) -> Vec<ContactPointState> {
        (0..self.model.info().nc)
            .map(|_| {
                ContactPointState::new(
                    self.contact.stiffness,
                    self.contact.damping,
                    self.contact.friction,
                )
            })
            .collect()
    }

    pub fn names() -> &'static [&'static str] {
        &[
            "mass-drop",
            "box-drop",
            "box-push",
            "hopper-squat",
            "hopper-hop",
        ]
    }

    /// Built-in scenario with its default parameters
    /// (K = 1e5 N/m, B = 300 Ns/m, μ = 1).
    pub fn builtin(name: &str) -> Option<Scenario> {
        Scenario::configured(name, None, None, None)
    }

    /// Built-in scenario with overridden contact parameters, controller step
    /// or duration. Overrides are applied before the controller is designed,
    /// so the hopper feedback gains match the actual contact and tick rate.
    pub fn configured(
        name: &str,
        contact: Option<ContactParams>,
        dt_c: Option<f64>,
        duration: Option<f64>,
    ) -> Option<Scenario> {
        let contact = contact.unwrap_or(ContactParams::new(1e5, 300.0, 1.0));
        match name {
            "mass-drop" => {
                let model = Arc::new(PointMass3D::new(1.0));
                let q = DVector::from_vec(vec![0.0, 0.0, 0.01]);
                let v = DVector::from_vec(vec![0.0, 0.0, -0.5]);
                Some(Scenario {
                    id: name.to_string(),
                    model,
                    initial_state: RobotState::new(q, v),
                    controller: Controller::Passive,
                    contact,
                    duration: duration.unwrap_or(1.0),
                    dt_c: dt_c.unwrap_or(0.010),
                })
            }
            "box-drop" => {
                // Trunk-like inertia: most of the mass near the center with
                // the contact corners far out, the way feet hang off light
                // legs. A slight tilt and spin make the corners land in
                // sequence.
                let model = Arc::new(box_model());
                let mut q = DVector::zeros(7);
                q[2] = 0.08;
                let tilt =
                    nalgebra::UnitQuaternion::from_scaled_axis(Vector3::new(0.05, 0.08, 0.0));
                let c = tilt.quaternion();
                q[3] = c.w;
                q[4] = c.i;
                q[5] = c.j;
                q[6] = c.k;
                let mut v = DVector::zeros(6);
                v[2] = -0.5;
                v[3] = 1.0;
                v[4] = -0.5;
                Some(Scenario {
                    id: name.to_string(),
                    model,
                    initial_state: RobotState::new(q, v),
                    controller: Controller::Passive,
                    contact,
                    duration: duration.unwrap_or(2.0),
                    dt_c: dt_c.unwrap_or(0.010),
                })
            }
            "box-push" => {
                // Resting box pushed sideways hard enough to slide
                // (F > μ·m·g); the torque keeps the push line at ground
                // height so the box does not tip.
                let model = Arc::new(box_model());
                let mut q = DVector::zeros(7);
                q[2] = 0.05 - 10.0 * GRAVITY / (4.0 * contact.stiffness);
                q[3] = 1.0;
                let mut wrench = DVector::zeros(6);
                wrench[0] = 150.0;
                wrench[4] = -150.0 * 0.05;
                Some(Scenario {
                    id: name.to_string(),
                    model,
                    initial_state: RobotState::new(q, DVector::zeros(6)),
                    controller: Controller::ConstantWrench(wrench),
                    contact,
                    duration: duration.unwrap_or(1.0),
                    dt_c: dt_c.unwrap_or(0.010),
                })
            }
            "hopper-squat" => {
                let model = Arc::new(hopper_model());
                let dt_c = dt_c.unwrap_or(0.010);
                let (eq, gain) =
                    hopper_stance_feedback(model.as_ref(), 0.3, -0.6, &contact, dt_c);
                // Reference amplitude from the neighboring stance equilibria,
                // so height, pitch and lateral sway move consistently with
                // the joints; each pose is shifted to keep the foot where the
                // anchor is.
                let amp = 0.072;
                let foot_x = |q: &DVector<f64>| {
                    model.contact_kinematics(q, &DVector::zeros(5)).positions[0].x
                };
                let f0 = foot_x(&eq.q);
                let mut deep =
                    hopper_stance_equilibrium(model.as_ref(), 0.3 + amp, -0.6 - 2.0 * amp, &contact);
                deep.q[0] += f0 - foot_x(&deep.q);
                let mut tall =
                    hopper_stance_equilibrium(model.as_ref(), 0.3 - amp, -0.6 + 2.0 * amp, &contact);
                tall.q[0] += f0 - foot_x(&tall.q);
                let amplitude = (&deep.q - &tall.q) * 0.5;
                Some(Scenario {
                    id: name.to_string(),
                    model: model.clone(),
                    initial_state: RobotState::new(eq.q.clone(), DVector::zeros(5)),
                    controller: Controller::StateFeedback {
                        q_ref: eq.q,
                        tau_ff: eq.tau,
                        gain,
                        program: ReferenceProgram::Sinusoid {
                            amplitude,
                            period: 1.2,
                        },
                        flight_kp: DVector::from_vec(vec![50.0, 25.0]),
                        flight_kd: DVector::from_vec(vec![1.5, 0.7]),
                        foot_placement_gain: 0.2,
                        tau_limit: 30.0,
                        thrust: None,
                    },
                    contact,
                    duration: duration.unwrap_or(2.0),
                    dt_c,
                })
            }
            "hopper-hop" => {
                let model = Arc::new(hopper_model());
                let dt_c = dt_c.unwrap_or(0.010);
                let (eq, gain) =
                    hopper_stance_feedback(model.as_ref(), 0.5, -1.0, &contact, dt_c);
                // Jump in place: hold the crouch, fire one extension thrust
                // through hip and knee, fold the leg in flight, recover.
                Some(Scenario {
                    id: name.to_string(),
                    model: model.clone(),
                    initial_state: RobotState::new(eq.q.clone(), DVector::zeros(5)),
                    controller: Controller::StateFeedback {
                        q_ref: eq.q,
                        tau_ff: eq.tau,
                        gain,
                        program: ReferenceProgram::Hold,
                        flight_kp: DVector::from_vec(vec![50.0, 25.0]),
                        flight_kd: DVector::from_vec(vec![1.5, 0.7]),
                        foot_placement_gain: 0.2,
                        tau_limit: 30.0,
                        thrust: Some((0.3, 0.15, DVector::from_vec(vec![-1.5, 3.0]))),
                    },
                    contact,
                    duration: duration.unwrap_or(2.0),
                    dt_c,
                })
            }
            _ => None,
        }
    }

    /// Replaces the contact parameters; built-in scenarios are rebuilt so
    /// controller gains and initial penetrations stay consistent.
    pub fn with_contact(self, contact: ContactParams) -> Self {
        match Scenario::configured(&self.id, Some(contact), Some(self.dt_c), Some(self.duration)) {
            Some(s) => s,
            None => {
                let mut s = self;
                s.contact = contact;
                s
            }
        }
    }

    /// Changes the controller step; built-in scenarios are rebuilt.
    pub fn with_dt_c(self, dt_c: f64) -> Self {
        match Scenario::configured(&self.id, Some(self.contact), Some(dt_c), Some(self.duration)) {
            Some(s) => s,
            None => {
                let mut s = self;
                s.dt_c = dt_c;
                s
            }
        }
    }

    pub fn with_duration(mut self, duration: f64) -> Self {
        self.duration = duration;
        self
    }
}

fn box_model() -> FreeBox3D {
    FreeBox3D::new(
        10.0,
        Vector3::new(0.01, 0.01, 0.01),
        Vector3::new(0.1, 0.1, 0.05),
    )
}

fn hopper_model() -> PlanarHopper {
    PlanarHopper::new(5.0, [0.5, 0.3], [0.25, 0.25])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_construct() {
        for name in Scenario::names() {
            let s = Scenario::builtin(name).unwrap();
            assert_eq!(s.initial_state.q.len(), s.model.info().nq);
            assert_eq!(s.initial_state.v.len(), s.model.info().nv);
            assert!(s.duration >= s.dt_c);
            assert!(s.dt_c > 0.0);
        }
        assert!(Scenario::builtin("no-such").is_none());
    }

    #[test]
    fn damping_ratio_round_trip() {
        let c = ContactParams::from_damping_ratio(1e5, 0.5, 1.0);
        assert!((c.damping_ratio() - 0.5).abs() < 1e-12);
        // The default pairing K = 1e5, B = 300 sits near ratio 0.474.
        let d = ContactParams::new(1e5, 300.0, 1.0);
        assert!((d.damping_ratio() - 300.0 / (2.0 * 1e5f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn pd_is_zero_at_setpoint_and_rest() {
        let s = Scenario::builtin("hopper-squat").unwrap();
        let mut state = s.initial_state.clone();
        state.q[3] = 0.3;
        state.q[4] = -0.6;
        state.v.fill(0.0);
        let ctrl = Controller::JointPd {
            setpoint: DVector::from_vec(vec![0.3, -0.6]),
            program: ReferenceProgram::Hold,
            kp: DVector::from_vec(vec![60.0, 60.0]),
            kd: DVector::from_vec(vec![3.0, 3.0]),
        };
        let tau = ctrl.torque(0.0, s.model.as_ref(), &state, &s.fresh_contacts());
        assert!(tau.amax() <= 1e-12);
    }

    #[test]
    fn pure_damping_opposes_velocity() {
        let s = Scenario::builtin("hopper-squat").unwrap();
        let mut state = s.initial_state.clone();
        let ctrl = Controller::JointPd {
            setpoint: DVector::from_vec(vec![state.q[3], state.q[4]]),
            program: ReferenceProgram::Hold,
            kp: DVector::zeros(2),
            kd: DVector::from_vec(vec![2.0, 2.0]),
        };
        state.v[3] = 0.7;
        state.v[4] = -0.4;
        let tau = ctrl.torque(0.3, s.model.as_ref(), &state, &s.fresh_contacts());
        assert!(tau[0] < 0.0 && tau[1] > 0.0);
    }

    #[test]
    fn state_feedback_is_feedforward_at_the_reference() {
        let s = Scenario::builtin("hopper-squat").unwrap();
        if let Controller::StateFeedback { q_ref, tau_ff, .. } = &s.controller {
            let state = RobotState::new(q_ref.clone(), DVector::zeros(5));
            let mut contacts = s.fresh_contacts();
            contacts[0].active = true;
            let tau = s.controller.torque(0.0, s.model.as_ref(), &state, &contacts);
            assert!((tau - tau_ff).amax() <= 1e-12);
        } else {
            panic!("hopper-squat should use state feedback");
        }
    }
}
