//! RES-CLF synthesis for structured output dynamics, closed-loop simulation of
//! continuous periodic orbits under phase-estimation disturbances, and
//! numerical certification of phase-to-state stability.

pub mod certify;
pub mod clf;
pub mod commands;
pub mod config;
pub mod disturbance;
pub mod error;
pub mod output_dynamics;
pub mod plants;
pub mod riccati;
pub mod simulator;
mod serde_mat;

pub use error::{Error, Result};
