//! Spectral simulation and covariance statistics for weakly nonlinear random
//! dispersive waves on the torus: KdV, BBM, KP-I and KP-II in the form
//! `(d_t + L) u + eps J(u^2) = 0`.

pub mod dealias;
pub mod ensemble;
pub mod error;
pub mod evolve;
pub mod picard;
pub mod spectral;
pub mod statistics;

pub use error::{Error, Result};

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}
