//! Car-following dynamics on a ring road.
//!
//! A utility-maximizing driver model defines a discrete-time map over the
//! vehicles' kinematic states. This crate evaluates the policy, simulates
//! the full map, solves for its free-flow fixed point, analyzes linear
//! stability per Fourier mode through the roots of a z-domain
//! characteristic cubic, and sweeps density and ideal speed to reconstruct
//! the bifurcation structure, including the critical speed-advisory curve
//! that keeps traffic wave-free.

pub mod equilibrium;
pub mod error;
pub mod model;
pub mod params;
pub mod ring;
pub mod stability;
pub mod sweeps;

pub use error::{Error, Result};
pub use params::ModelParams;

/// Complex scalar used throughout the spectrum types.
pub use num_complex::Complex64;
