//! Simulation of articulated multi-body systems with stiff visco-elastic
//! frictional contacts, integrated with a first-order exponential scheme.
//!
//! The stiff part of the dynamics lives in contact space: penetration and
//! penetration-rate of the active contact points follow a linear system whose
//! matrix is assembled from the Delassus operator and the contact
//! stiffness/damping. That system is solved exactly over each step through
//! the matrix exponential of a small augmented matrix ([`expm`]), while the
//! remaining smooth terms are held constant. Reference steppers (explicit
//! Euler, RK4, implicit Euler with Newton) share the same continuous dynamics
//! so speed, accuracy and stability can be compared on equal footing
//! ([`bench`], [`cli`]).

pub mod bench;
pub mod cli;
pub mod config;
pub mod contact;
pub mod expm;
pub mod integrators;
pub mod mechanics;

pub use contact::{ContactPointState, FrictionConeCheck};
pub use expm::{balance, compute_integrals, expm_multiply, pade_expm, ExpIntegrals, PadePolicy};
pub use integrators::{
    build_contact_lds, continuous_dynamics, euler_explicit_step, euler_implicit_step, expo_step,
    rk4_step, ContactLds, IntegratorKind, SimError, StepReport,
};
pub use mechanics::{
    ContactKinematics, FreeBox3D, Model, ModelInfo, PlanarHopper, PointMass3D, RobotState,
};
