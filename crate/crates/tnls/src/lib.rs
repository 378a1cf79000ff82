//! Numerical laboratory for the focusing energy-critical radial NLS
//! i∂ₜu + Δu + |u|^{p_c−1}u = 0 in dimensions 3, 4, 5.

pub mod banded;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod grid;
pub mod io;
pub mod ground_state;
pub mod linearized;
pub mod modulation;
pub mod profiles;
pub mod virial;

pub use error::{Error, Result};
