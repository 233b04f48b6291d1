//! Synthetic closed-loop testbeds.
//!
//! * [`hopf`]: transverse output dynamics coupled to Hopf-oscillator zero
//!   dynamics, whose periodic orbit, orbit distance and converse Lyapunov
//!   function are all available in closed form.
//! * [`mech`]: a unit-inertia two-link mechanical system with a Bezier virtual
//!   constraint, a state-based phase variable and both state- and time-based
//!   feedback linearization.

pub mod bezier;
pub mod hopf;
pub mod mech;

pub use hopf::{
    hopf_vector_field, orbit_distance, vz_converse_lyapunov, ConverseLyapunov, HopfPlant,
    ZeroDynamicsConstants,
};
pub use mech::{
    derive_phase_disturbance, mech_feedback_linearize, LinearizationMode, MechPlant, PhaseInput,
};
